//! MiniGrid-MA: a deterministic cooperative multi-agent gridworld.
//!
//! Coordinates are `(x, y)` with `x` growing east and `y` growing south.
//! Cells are stored row-major. Every transition is a pure function of the
//! current [`GridState`] and the joint action.

mod generate;
mod observe;
mod render;
mod replay;

pub use generate::generate_map;
pub use observe::{observe, Observation, OBS_CHANNELS};
pub use render::render_ascii;
pub use replay::{Replay, ReplayHeader};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("invalid environment configuration: {0}")]
    Config(String),
    #[error("map generation failed after {attempts} attempts for {kind} {size}x{size}")]
    Generation {
        kind: MapKind,
        size: usize,
        attempts: usize,
    },
    #[error("usage error: {0}")]
    Usage(String),
    #[error("replay parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// The five MiniGrid-MA map families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MapKind {
    DoorKeyB,
    DoorSwitchA,
    DoorSwitchB,
    DoorSwitchC,
    DoorSwitchD,
}

impl MapKind {
    pub const ALL: [MapKind; 5] = [
        MapKind::DoorKeyB,
        MapKind::DoorSwitchA,
        MapKind::DoorSwitchB,
        MapKind::DoorSwitchC,
        MapKind::DoorSwitchD,
    ];

    /// Grid sizes the map family is defined for, smallest first.
    pub fn sizes(self) -> &'static [usize] {
        match self {
            MapKind::DoorKeyB => &[6, 8],
            MapKind::DoorSwitchA => &[8, 12, 16],
            MapKind::DoorSwitchB => &[8, 10, 16],
            MapKind::DoorSwitchC => &[8, 12, 16],
            MapKind::DoorSwitchD => &[10, 12, 14],
        }
    }

    pub fn num_agents(self) -> usize {
        match self {
            MapKind::DoorKeyB | MapKind::DoorSwitchA | MapKind::DoorSwitchB => 2,
            MapKind::DoorSwitchC | MapKind::DoorSwitchD => 3,
        }
    }

    pub fn smallest_size(self) -> usize {
        self.sizes()[0]
    }

    pub fn name(self) -> &'static str {
        match self {
            MapKind::DoorKeyB => "DoorKeyB",
            MapKind::DoorSwitchA => "DoorSwitchA",
            MapKind::DoorSwitchB => "DoorSwitchB",
            MapKind::DoorSwitchC => "DoorSwitchC",
            MapKind::DoorSwitchD => "DoorSwitchD",
        }
    }
}

impl fmt::Display for MapKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MapKind {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        // Unsuffixed "DoorSwitch" is read as DoorSwitchA.
        match s {
            "DoorKeyB" => Ok(MapKind::DoorKeyB),
            "DoorSwitchA" | "DoorSwitch" => Ok(MapKind::DoorSwitchA),
            "DoorSwitchB" => Ok(MapKind::DoorSwitchB),
            "DoorSwitchC" => Ok(MapKind::DoorSwitchC),
            "DoorSwitchD" => Ok(MapKind::DoorSwitchD),
            other => Err(EnvError::Config(format!("unknown map kind `{other}`"))),
        }
    }
}

/// Parses map names such as `DoorKeyB6x6` or `DoorSwitch12x12`.
pub fn parse_map_name(name: &str) -> Result<(MapKind, usize), EnvError> {
    let split = name
        .find(|c: char| c.is_ascii_digit())
        .ok_or_else(|| EnvError::Config(format!("map name `{name}` has no size")))?;
    let (kind, dims) = name.split_at(split);
    let kind: MapKind = kind.parse()?;
    let size = match dims.split_once('x') {
        Some((w, h)) if w == h => w.parse().ok(),
        None => dims.parse().ok(),
        _ => None,
    }
    .ok_or_else(|| EnvError::Config(format!("bad map size in `{name}`")))?;
    Ok((kind, size))
}

pub fn map_name(kind: MapKind, size: usize) -> String {
    format!("{kind}{size}x{size}")
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EnvConfig {
    pub map_kind: MapKind,
    pub grid_size: usize,
    pub num_agents: usize,
    pub max_steps: u32,
    pub view_size: usize,
    pub seed: u64,
}

impl EnvConfig {
    /// Configuration with the default horizon (`4 * size^2`) and a 7x7 view.
    pub fn new(map_kind: MapKind, grid_size: usize, seed: u64) -> Self {
        Self {
            map_kind,
            grid_size,
            num_agents: map_kind.num_agents(),
            max_steps: default_max_steps(grid_size),
            view_size: 7,
            seed,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if !self.map_kind.sizes().contains(&self.grid_size) {
            return Err(EnvError::Config(format!(
                "{} is defined for sizes {:?}, got {}",
                self.map_kind,
                self.map_kind.sizes(),
                self.grid_size
            )));
        }
        if self.num_agents != self.map_kind.num_agents() {
            return Err(EnvError::Config(format!(
                "{} requires {} agents, got {}",
                self.map_kind,
                self.map_kind.num_agents(),
                self.num_agents
            )));
        }
        if self.max_steps < 1 {
            return Err(EnvError::Config("max_steps must be at least 1".into()));
        }
        if self.view_size < 3 || self.view_size.is_multiple_of(2) {
            return Err(EnvError::Config(format!(
                "view_size must be odd and >= 3, got {}",
                self.view_size
            )));
        }
        Ok(())
    }
}

pub fn default_max_steps(grid_size: usize) -> u32 {
    (4 * grid_size * grid_size) as u32
}

/// Object kind codes, shared with the observation encoding.
pub mod kind {
    pub const UNSEEN: u8 = 0;
    pub const EMPTY: u8 = 1;
    pub const WALL: u8 = 2;
    pub const DOOR: u8 = 4;
    pub const KEY: u8 = 5;
    pub const GOAL: u8 = 8;
    pub const AGENT: u8 = 10;
    pub const SWITCH: u8 = 11;
    pub const MAX: u8 = 11;
}

pub mod door_state {
    pub const OPEN: u8 = 0;
    pub const CLOSED: u8 = 1;
    pub const LOCKED: u8 = 2;
}

pub mod switch_state {
    pub const OFF: u8 = 0;
    pub const ON: u8 = 1;
}

pub const NUM_COLORS: u8 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ObjectKind {
    Empty,
    Wall,
    Door,
    Key,
    Switch,
    Goal,
}

impl ObjectKind {
    pub fn code(self) -> u8 {
        match self {
            ObjectKind::Empty => kind::EMPTY,
            ObjectKind::Wall => kind::WALL,
            ObjectKind::Door => kind::DOOR,
            ObjectKind::Key => kind::KEY,
            ObjectKind::Switch => kind::SWITCH,
            ObjectKind::Goal => kind::GOAL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub kind: ObjectKind,
    pub color: u8,
    pub state: u8,
}

impl Cell {
    pub const EMPTY: Cell = Cell {
        kind: ObjectKind::Empty,
        color: 0,
        state: 0,
    };
    pub const WALL: Cell = Cell {
        kind: ObjectKind::Wall,
        color: 5,
        state: 0,
    };
    pub const GOAL: Cell = Cell {
        kind: ObjectKind::Goal,
        color: 1,
        state: 0,
    };

    pub fn door(color: u8, state: u8) -> Cell {
        Cell {
            kind: ObjectKind::Door,
            color,
            state,
        }
    }

    pub fn key(color: u8) -> Cell {
        Cell {
            kind: ObjectKind::Key,
            color,
            state: 0,
        }
    }

    pub fn switch(color: u8) -> Cell {
        Cell {
            kind: ObjectKind::Switch,
            color,
            state: switch_state::OFF,
        }
    }

    /// Whether an agent may stand on this cell.
    pub fn is_passable(&self) -> bool {
        match self.kind {
            ObjectKind::Empty | ObjectKind::Goal => true,
            ObjectKind::Door => self.state == door_state::OPEN,
            _ => false,
        }
    }

    /// Whether light passes through this cell.
    pub fn see_behind(&self) -> bool {
        match self.kind {
            ObjectKind::Wall => false,
            ObjectKind::Door => self.state == door_state::OPEN,
            _ => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    East = 0,
    South = 1,
    West = 2,
    North = 3,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction::East,
        Direction::South,
        Direction::West,
        Direction::North,
    ];

    pub fn from_index(i: u8) -> Direction {
        Self::ALL[(i % 4) as usize]
    }

    pub fn index(self) -> u8 {
        self as u8
    }

    pub fn left(self) -> Direction {
        Self::from_index(self.index() + 3)
    }

    pub fn right(self) -> Direction {
        Self::from_index(self.index() + 1)
    }

    pub fn delta(self) -> (isize, isize) {
        match self {
            Direction::East => (1, 0),
            Direction::South => (0, 1),
            Direction::West => (-1, 0),
            Direction::North => (0, -1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pos {
    pub x: usize,
    pub y: usize,
}

impl Pos {
    pub fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }

    /// Neighbouring cell in `dir`. Callers keep agents off the border, which is
    /// always wall, so this never underflows for an agent position.
    pub fn step(self, dir: Direction) -> Pos {
        let (dx, dy) = dir.delta();
        Pos {
            x: (self.x as isize + dx) as usize,
            y: (self.y as isize + dy) as usize,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AgentState {
    pub id: usize,
    pub pos: Pos,
    pub dir: Direction,
    pub carrying: Option<Cell>,
    pub done: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Action {
    TurnLeft = 0,
    TurnRight = 1,
    Forward = 2,
    Pickup = 3,
    Drop = 4,
    Toggle = 5,
    Noop = 6,
}

impl Action {
    pub const COUNT: usize = 7;
    pub const ALL: [Action; 7] = [
        Action::TurnLeft,
        Action::TurnRight,
        Action::Forward,
        Action::Pickup,
        Action::Drop,
        Action::Toggle,
        Action::Noop,
    ];

    pub fn from_index(i: usize) -> Option<Action> {
        Self::ALL.get(i).copied()
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub agent_done: Vec<bool>,
    /// Every agent stands on a goal cell.
    pub completed: bool,
    /// Completed or out of time.
    pub terminated: bool,
    pub team_reward: f64,
}

/// Sparse team reward: `2 - t / t_max` on completion, else 0.
pub fn team_reward(completed: bool, t: u32, t_max: u32) -> Result<f64, EnvError> {
    if t == 0 || t > t_max {
        return Err(EnvError::Usage(format!(
            "team_reward needs 0 < t <= t_max, got t={t}, t_max={t_max}"
        )));
    }
    if completed {
        Ok(2.0 - f64::from(t) / f64::from(t_max))
    } else {
        Ok(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridState {
    pub config: EnvConfig,
    pub width: usize,
    pub height: usize,
    pub cells: Vec<Cell>,
    pub agents: Vec<AgentState>,
    pub t: u32,
}

impl GridState {
    pub(crate) fn empty(config: EnvConfig) -> Self {
        let n = config.grid_size;
        let mut cells = vec![Cell::EMPTY; n * n];
        for i in 0..n {
            cells[i] = Cell::WALL;
            cells[(n - 1) * n + i] = Cell::WALL;
            cells[i * n] = Cell::WALL;
            cells[i * n + n - 1] = Cell::WALL;
        }
        Self {
            config,
            width: n,
            height: n,
            cells,
            agents: Vec::new(),
            t: 0,
        }
    }

    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn in_bounds(&self, x: isize, y: isize) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }

    pub fn cell(&self, p: Pos) -> Cell {
        self.cells[p.y * self.width + p.x]
    }

    pub fn set_cell(&mut self, p: Pos, c: Cell) {
        self.cells[p.y * self.width + p.x] = c;
    }

    pub fn agent_at(&self, p: Pos) -> Option<usize> {
        self.agents.iter().position(|a| a.pos == p)
    }

    pub fn all_done(&self) -> bool {
        self.agents.iter().all(|a| a.done)
    }

    pub fn is_terminated(&self) -> bool {
        self.all_done() || self.t >= self.config.max_steps
    }

    /// Colors that have a switch somewhere on the map. Doors of these colors
    /// are switch-controlled and cannot be opened by hand.
    fn switch_colors(&self) -> u8 {
        self.cells
            .iter()
            .filter(|c| c.kind == ObjectKind::Switch)
            .fold(0u8, |m, c| m | (1 << c.color))
    }

    /// Pure transition; see [`GridState::advance`].
    pub fn step(&self, actions: &[Action]) -> Result<(GridState, StepOutcome), EnvError> {
        let mut next = self.clone();
        let outcome = next.advance(actions)?;
        Ok((next, outcome))
    }

    /// Applies one joint action in place.
    ///
    /// Resolution order: rotations, then object interactions in agent-index
    /// order, then simultaneous movement. Movement conflicts go to the lower
    /// agent index; swap attempts block both agents; an agent cannot enter a
    /// cell whose occupant stays put. Agents standing on a goal are frozen.
    pub fn advance(&mut self, actions: &[Action]) -> Result<StepOutcome, EnvError> {
        if self.is_terminated() {
            return Err(EnvError::Usage(
                "step called on a terminated episode".into(),
            ));
        }
        if actions.len() != self.agents.len() {
            return Err(EnvError::Usage(format!(
                "expected {} actions, got {}",
                self.agents.len(),
                actions.len()
            )));
        }
        let acts: Vec<Action> = actions
            .iter()
            .zip(&self.agents)
            .map(|(&a, ag)| if ag.done { Action::Noop } else { a })
            .collect();

        for (agent, act) in self.agents.iter_mut().zip(&acts) {
            match act {
                Action::TurnLeft => agent.dir = agent.dir.left(),
                Action::TurnRight => agent.dir = agent.dir.right(),
                _ => {}
            }
        }

        let switch_colors = self.switch_colors();
        for k in 0..self.agents.len() {
            match acts[k] {
                Action::Pickup => self.pickup(k),
                Action::Drop => self.drop_carried(k),
                Action::Toggle => self.toggle(k, switch_colors),
                _ => {}
            }
        }

        self.resolve_moves(&acts);

        for agent in &mut self.agents {
            let on_goal =
                self.cells[agent.pos.y * self.width + agent.pos.x].kind == ObjectKind::Goal;
            if on_goal {
                agent.done = true;
            }
        }
        self.t += 1;

        let completed = self.all_done();
        let terminated = completed || self.t >= self.config.max_steps;
        let team_reward = team_reward(completed, self.t, self.config.max_steps)?;
        Ok(StepOutcome {
            agent_done: self.agents.iter().map(|a| a.done).collect(),
            completed,
            terminated,
            team_reward,
        })
    }

    fn front(&self, k: usize) -> Pos {
        let a = &self.agents[k];
        a.pos.step(a.dir)
    }

    fn pickup(&mut self, k: usize) {
        let front = self.front(k);
        let cell = self.cell(front);
        if self.agents[k].carrying.is_none() && cell.kind == ObjectKind::Key {
            self.agents[k].carrying = Some(cell);
            self.set_cell(front, Cell::EMPTY);
        }
    }

    fn drop_carried(&mut self, k: usize) {
        let front = self.front(k);
        if let Some(obj) = self.agents[k].carrying {
            if self.cell(front).kind == ObjectKind::Empty && self.agent_at(front).is_none() {
                self.set_cell(front, obj);
                self.agents[k].carrying = None;
            }
        }
    }

    fn toggle(&mut self, k: usize, switch_colors: u8) {
        let front = self.front(k);
        let cell = self.cell(front);
        match cell.kind {
            ObjectKind::Door => {
                if switch_colors & (1 << cell.color) != 0 || self.agent_at(front).is_some() {
                    return;
                }
                let next = match cell.state {
                    door_state::LOCKED => {
                        let has_key = self.agents[k]
                            .carrying
                            .is_some_and(|c| c.kind == ObjectKind::Key && c.color == cell.color);
                        if has_key {
                            door_state::OPEN
                        } else {
                            door_state::LOCKED
                        }
                    }
                    door_state::CLOSED => door_state::OPEN,
                    _ => door_state::CLOSED,
                };
                self.set_cell(front, Cell::door(cell.color, next));
            }
            ObjectKind::Switch => {
                let flipped = if cell.state == switch_state::ON {
                    switch_state::OFF
                } else {
                    switch_state::ON
                };
                self.set_cell(
                    front,
                    Cell {
                        state: flipped,
                        ..cell
                    },
                );
                for i in 0..self.cells.len() {
                    let c = self.cells[i];
                    if c.kind != ObjectKind::Door || c.color != cell.color {
                        continue;
                    }
                    let p = Pos::new(i % self.width, i / self.width);
                    let next = match c.state {
                        door_state::CLOSED => door_state::OPEN,
                        // An occupied doorway stays open.
                        door_state::OPEN if self.agent_at(p).is_none() => door_state::CLOSED,
                        other => other,
                    };
                    self.cells[i].state = next;
                }
            }
            _ => {}
        }
    }

    fn resolve_moves(&mut self, acts: &[Action]) {
        let n = self.agents.len();
        let mut target: Vec<Option<Pos>> = (0..n)
            .map(|k| {
                if acts[k] != Action::Forward {
                    return None;
                }
                let p = self.front(k);
                self.cell(p).is_passable().then_some(p)
            })
            .collect();

        // Swaps block both parties.
        for i in 0..n {
            for j in (i + 1)..n {
                if let (Some(ti), Some(tj)) = (target[i], target[j]) {
                    if ti == self.agents[j].pos && tj == self.agents[i].pos {
                        target[i] = None;
                        target[j] = None;
                    }
                }
            }
        }
        // Same target: lowest index wins.
        for i in 0..n {
            if let Some(ti) = target[i] {
                for j in (i + 1)..n {
                    if target[j] == Some(ti) {
                        target[j] = None;
                    }
                }
            }
        }
        // Cannot enter a cell whose occupant is not leaving; cascades.
        loop {
            let mut changed = false;
            for i in 0..n {
                if let Some(ti) = target[i] {
                    let blocked =
                        (0..n).any(|j| j != i && self.agents[j].pos == ti && target[j].is_none());
                    if blocked {
                        target[i] = None;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        for (agent, t) in self.agents.iter_mut().zip(target) {
            if let Some(p) = t {
                agent.pos = p;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 5x5 arena with the given agents, all facing east.
    fn arena(agents: &[(usize, usize)]) -> GridState {
        let mut cfg = EnvConfig::new(MapKind::DoorKeyB, 6, 0);
        cfg.grid_size = 6;
        cfg.num_agents = agents.len();
        let mut s = GridState::empty(cfg);
        s.agents = agents
            .iter()
            .enumerate()
            .map(|(id, &(x, y))| AgentState {
                id,
                pos: Pos::new(x, y),
                dir: Direction::East,
                carrying: None,
                done: false,
            })
            .collect();
        s
    }

    #[test]
    fn team_reward_values() {
        assert_eq!(team_reward(true, 100, 100).unwrap(), 1.0);
        assert_eq!(team_reward(true, 50, 100).unwrap(), 1.5);
        assert_eq!(team_reward(false, 37, 100).unwrap(), 0.0);
        assert!(team_reward(true, 0, 100).is_err());
        assert!(team_reward(true, 101, 100).is_err());
    }

    #[test]
    fn forward_into_wall_is_blocked() {
        let mut s = arena(&[(4, 2), (1, 1)]);
        let out = s.advance(&[Action::Forward, Action::Noop]).unwrap();
        assert_eq!(s.agents[0].pos, Pos::new(4, 2));
        assert_eq!(s.agents[0].dir, Direction::East);
        assert!(!out.terminated);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn same_target_goes_to_lower_index() {
        let mut s = arena(&[(1, 2), (3, 2)]);
        s.agents[1].dir = Direction::West;
        // Both want (2, 2).
        s.advance(&[Action::Forward, Action::Forward]).unwrap();
        assert_eq!(s.agents[0].pos, Pos::new(2, 2));
        assert_eq!(s.agents[1].pos, Pos::new(3, 2));
    }

    #[test]
    fn swaps_are_blocked() {
        let mut s = arena(&[(1, 2), (2, 2)]);
        s.agents[1].dir = Direction::West;
        s.advance(&[Action::Forward, Action::Forward]).unwrap();
        assert_eq!(s.agents[0].pos, Pos::new(1, 2));
        assert_eq!(s.agents[1].pos, Pos::new(2, 2));
    }

    #[test]
    fn follow_the_leader_moves_both() {
        let mut s = arena(&[(1, 2), (2, 2)]);
        s.advance(&[Action::Forward, Action::Forward]).unwrap();
        assert_eq!(s.agents[0].pos, Pos::new(2, 2));
        assert_eq!(s.agents[1].pos, Pos::new(3, 2));
    }

    #[test]
    fn blocked_leader_blocks_follower() {
        let mut s = arena(&[(3, 2), (4, 2)]);
        s.advance(&[Action::Forward, Action::Forward]).unwrap();
        assert_eq!(s.agents[0].pos, Pos::new(3, 2));
        assert_eq!(s.agents[1].pos, Pos::new(4, 2));
    }

    #[test]
    fn switch_flips_matching_doors_only() {
        let mut s = arena(&[(1, 1), (1, 3)]);
        s.set_cell(Pos::new(2, 1), Cell::switch(2));
        s.set_cell(Pos::new(3, 3), Cell::door(2, door_state::CLOSED));
        s.set_cell(Pos::new(4, 4), Cell::door(3, door_state::CLOSED));
        s.advance(&[Action::Toggle, Action::Noop]).unwrap();
        assert_eq!(s.cell(Pos::new(3, 3)).state, door_state::OPEN);
        assert_eq!(s.cell(Pos::new(4, 4)).state, door_state::CLOSED);
        assert_eq!(s.cell(Pos::new(2, 1)).state, switch_state::ON);
        s.advance(&[Action::Toggle, Action::Noop]).unwrap();
        assert_eq!(s.cell(Pos::new(3, 3)).state, door_state::CLOSED);
    }

    #[test]
    fn switch_doors_resist_hand_toggle() {
        let mut s = arena(&[(1, 1), (2, 3)]);
        s.set_cell(Pos::new(4, 1), Cell::switch(2));
        s.set_cell(Pos::new(3, 3), Cell::door(2, door_state::CLOSED));
        s.advance(&[Action::Noop, Action::Toggle]).unwrap();
        assert_eq!(s.cell(Pos::new(3, 3)).state, door_state::CLOSED);
    }

    #[test]
    fn key_unlocks_matching_door() {
        let mut s = arena(&[(1, 1), (1, 3)]);
        s.set_cell(Pos::new(2, 1), Cell::key(4));
        s.set_cell(Pos::new(2, 3), Cell::door(4, door_state::LOCKED));
        s.advance(&[Action::Noop, Action::Toggle]).unwrap();
        assert_eq!(s.cell(Pos::new(2, 3)).state, door_state::LOCKED);
        s.advance(&[Action::Pickup, Action::Noop]).unwrap();
        assert_eq!(s.agents[0].carrying, Some(Cell::key(4)));
        assert_eq!(s.cell(Pos::new(2, 1)), Cell::EMPTY);
        // Move agent 0 down next to the door: turn right (south), forward x2, turn left.
        for a in [Action::TurnRight, Action::Forward, Action::TurnLeft] {
            s.advance(&[a, Action::Noop]).unwrap();
        }
        // Agent 1 still sits at (1, 3); agent 0 at (1, 2) facing east.
        assert_eq!(s.agents[0].pos, Pos::new(1, 2));
        s.agents[1].pos = Pos::new(3, 1);
        s.advance(&[Action::TurnRight, Action::Noop]).unwrap();
        s.advance(&[Action::Forward, Action::Noop]).unwrap();
        s.advance(&[Action::TurnLeft, Action::Noop]).unwrap();
        s.advance(&[Action::Toggle, Action::Noop]).unwrap();
        assert_eq!(s.cell(Pos::new(2, 3)).state, door_state::OPEN);
        s.advance(&[Action::Forward, Action::Noop]).unwrap();
        assert_eq!(s.agents[0].pos, Pos::new(2, 3));
    }

    #[test]
    fn drop_requires_free_cell() {
        let mut s = arena(&[(1, 1), (2, 1)]);
        s.agents[0].carrying = Some(Cell::key(0));
        s.advance(&[Action::Drop, Action::Noop]).unwrap();
        assert!(s.agents[0].carrying.is_some());
        s.agents[1].pos = Pos::new(3, 3);
        s.advance(&[Action::Drop, Action::Noop]).unwrap();
        assert_eq!(s.cell(Pos::new(2, 1)), Cell::key(0));
    }

    #[test]
    fn goal_freezes_agent_and_completion_pays() {
        let mut s = arena(&[(1, 1), (3, 3)]);
        s.set_cell(Pos::new(2, 1), Cell::GOAL);
        s.set_cell(Pos::new(4, 3), Cell::GOAL);
        let out = s.advance(&[Action::Forward, Action::Noop]).unwrap();
        assert_eq!(out.agent_done, vec![true, false]);
        assert_eq!(out.team_reward, 0.0);
        s.advance(&[Action::TurnLeft, Action::Noop]).unwrap();
        assert_eq!(
            s.agents[0].dir,
            Direction::East,
            "frozen agents ignore actions"
        );
        let out = s.advance(&[Action::Noop, Action::Forward]).unwrap();
        assert!(out.completed && out.terminated);
        let t_max = s.config.max_steps;
        assert_eq!(out.team_reward, 2.0 - 3.0 / f64::from(t_max));
        assert!(s.advance(&[Action::Noop, Action::Noop]).is_err());
    }

    #[test]
    fn horizon_terminates() {
        let mut s = arena(&[(1, 1), (3, 3)]);
        s.config.max_steps = 2;
        assert!(!s.advance(&[Action::Noop, Action::Noop]).unwrap().terminated);
        let out = s.advance(&[Action::Noop, Action::Noop]).unwrap();
        assert!(out.terminated && !out.completed);
        assert_eq!(out.team_reward, 0.0);
    }

    #[test]
    fn map_names_parse() {
        assert_eq!(
            parse_map_name("DoorKeyB6x6").unwrap(),
            (MapKind::DoorKeyB, 6)
        );
        assert_eq!(
            parse_map_name("DoorSwitch12x12").unwrap(),
            (MapKind::DoorSwitchA, 12)
        );
        assert_eq!(
            parse_map_name("DoorSwitchD10").unwrap(),
            (MapKind::DoorSwitchD, 10)
        );
        assert!(parse_map_name("DoorKeyC8x8").is_err());
        assert!(parse_map_name("DoorKeyB6x8").is_err());
        assert_eq!(map_name(MapKind::DoorSwitchC, 8), "DoorSwitchC8x8");
    }

    #[test]
    fn config_validation() {
        assert!(EnvConfig::new(MapKind::DoorKeyB, 6, 0).validate().is_ok());
        assert!(EnvConfig::new(MapKind::DoorKeyB, 7, 0).validate().is_err());
        let mut c = EnvConfig::new(MapKind::DoorSwitchC, 8, 0);
        c.num_agents = 2;
        assert!(c.validate().is_err());
        let mut c = EnvConfig::new(MapKind::DoorSwitchA, 8, 0);
        c.view_size = 4;
        assert!(c.validate().is_err());
        assert_eq!(EnvConfig::new(MapKind::DoorKeyB, 6, 0).max_steps, 144);
    }
}
