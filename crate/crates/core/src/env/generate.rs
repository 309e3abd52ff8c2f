use std::collections::VecDeque;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    door_state, AgentState, Cell, Direction, EnvConfig, EnvError, GridState, MapKind, ObjectKind,
    Pos, NUM_COLORS,
};

const MAX_ATTEMPTS: usize = 256;

/// Inclusive rectangle of interior cells.
#[derive(Debug, Clone, Copy)]
struct Region {
    x0: usize,
    y0: usize,
    x1: usize,
    y1: usize,
}

impl Region {
    fn cells(self) -> impl Iterator<Item = Pos> {
        (self.y0..=self.y1).flat_map(move |y| (self.x0..=self.x1).map(move |x| Pos::new(x, y)))
    }
}

/// Builds the initial state for `config`. Same config, same map.
pub fn generate_map(config: &EnvConfig) -> Result<GridState, EnvError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for _ in 0..MAX_ATTEMPTS {
        let mut b = Builder::new(config.clone());
        let placed = match config.map_kind {
            MapKind::DoorKeyB => b.door_key_b(&mut rng),
            MapKind::DoorSwitchA => b.door_switch_a(&mut rng),
            MapKind::DoorSwitchB => b.door_switch_b(&mut rng),
            MapKind::DoorSwitchC => b.door_switch_c(&mut rng),
            MapKind::DoorSwitchD => b.door_switch_d(&mut rng),
        };
        if placed.is_some() && relaxed_solvable(&b.state) {
            return Ok(b.state);
        }
    }
    Err(EnvError::Generation {
        kind: config.map_kind,
        size: config.grid_size,
        attempts: MAX_ATTEMPTS,
    })
}

struct Builder {
    state: GridState,
    /// Cells reserved against object placement (door fronts, object halos).
    reserved: Vec<bool>,
}

impl Builder {
    fn new(config: EnvConfig) -> Self {
        let state = GridState::empty(config);
        let reserved = vec![false; state.cells.len()];
        Self { state, reserved }
    }

    fn idx(&self, p: Pos) -> usize {
        p.y * self.state.width + p.x
    }

    fn vertical_wall(&mut self, x: usize, y0: usize, y1: usize) {
        for y in y0..=y1 {
            self.state.set_cell(Pos::new(x, y), Cell::WALL);
        }
    }

    fn horizontal_wall(&mut self, y: usize, x0: usize, x1: usize) {
        for x in x0..=x1 {
            self.state.set_cell(Pos::new(x, y), Cell::WALL);
        }
    }

    fn door(&mut self, p: Pos, cell: Cell) {
        self.state.set_cell(p, cell);
        for d in Direction::ALL {
            let q = p.step(d);
            let i = self.idx(q);
            self.reserved[i] = true;
        }
    }

    fn free_cells(&self, region: Region, for_object: bool) -> Vec<Pos> {
        region
            .cells()
            .filter(|&p| {
                self.state.cell(p).kind == ObjectKind::Empty
                    && self.state.agent_at(p).is_none()
                    && !(for_object && self.reserved[self.idx(p)])
            })
            .collect()
    }

    /// Places an object; its 8-neighbourhood is reserved so objects never touch.
    fn object(&mut self, rng: &mut ChaCha8Rng, region: Region, cell: Cell) -> Option<Pos> {
        let p = *self.free_cells(region, true).choose(rng)?;
        self.state.set_cell(p, cell);
        for dy in -1isize..=1 {
            for dx in -1isize..=1 {
                let (x, y) = (p.x as isize + dx, p.y as isize + dy);
                if self.state.in_bounds(x, y) {
                    let i = self.idx(Pos::new(x as usize, y as usize));
                    self.reserved[i] = true;
                }
            }
        }
        Some(p)
    }

    fn agent(&mut self, rng: &mut ChaCha8Rng, region: Region) -> Option<()> {
        let p = *self.free_cells(region, false).choose(rng)?;
        let id = self.state.agents.len();
        self.state.agents.push(AgentState {
            id,
            pos: p,
            dir: Direction::from_index(rng.random_range(0..4)),
            carrying: None,
            done: false,
        });
        Some(())
    }

    fn colors(rng: &mut ChaCha8Rng, n: usize) -> Vec<u8> {
        // Grey (5) is the wall color; keep doors distinguishable from walls.
        let mut c: Vec<u8> = (0..NUM_COLORS - 1).collect();
        c.shuffle(rng);
        c.truncate(n);
        c
    }

    fn size(&self) -> usize {
        self.state.width
    }

    /// One vertical wall with a locked door; key and agent 0 on the left,
    /// agent 1 and both goals on the right.
    fn door_key_b(&mut self, rng: &mut ChaCha8Rng) -> Option<()> {
        let s = self.size();
        // The goal side keeps at least two columns.
        let split = rng.random_range(2..=s - 4);
        let door_y = rng.random_range(1..=s - 2);
        let color = Self::colors(rng, 1)[0];
        self.vertical_wall(split, 1, s - 2);
        self.door(
            Pos::new(split, door_y),
            Cell::door(color, door_state::LOCKED),
        );
        let left = Region {
            x0: 1,
            y0: 1,
            x1: split - 1,
            y1: s - 2,
        };
        let right = Region {
            x0: split + 1,
            y0: 1,
            x1: s - 2,
            y1: s - 2,
        };
        self.object(rng, right, Cell::GOAL)?;
        self.object(rng, right, Cell::GOAL)?;
        self.object(rng, left, Cell::key(color))?;
        self.agent(rng, left)?;
        self.agent(rng, right)
    }

    /// Closed door opened by a switch on the start side; both agents start
    /// left, goals on the right.
    fn door_switch_a(&mut self, rng: &mut ChaCha8Rng) -> Option<()> {
        let s = self.size();
        let split = rng.random_range(3..=s - 4);
        let door_y = rng.random_range(1..=s - 2);
        let color = Self::colors(rng, 1)[0];
        self.vertical_wall(split, 1, s - 2);
        self.door(
            Pos::new(split, door_y),
            Cell::door(color, door_state::CLOSED),
        );
        let left = Region {
            x0: 1,
            y0: 1,
            x1: split - 1,
            y1: s - 2,
        };
        let right = Region {
            x0: split + 1,
            y0: 1,
            x1: s - 2,
            y1: s - 2,
        };
        self.object(rng, right, Cell::GOAL)?;
        self.object(rng, right, Cell::GOAL)?;
        self.object(rng, left, Cell::switch(color))?;
        self.agent(rng, left)?;
        self.agent(rng, left)
    }

    /// Agent 0 shares the goal room with the switch; agent 1 is shut in the
    /// other room and only gets out when agent 0 flips the switch.
    fn door_switch_b(&mut self, rng: &mut ChaCha8Rng) -> Option<()> {
        let s = self.size();
        let split = rng.random_range(4..=s - 4);
        let door_y = rng.random_range(1..=s - 2);
        let color = Self::colors(rng, 1)[0];
        self.vertical_wall(split, 1, s - 2);
        self.door(
            Pos::new(split, door_y),
            Cell::door(color, door_state::CLOSED),
        );
        let left = Region {
            x0: 1,
            y0: 1,
            x1: split - 1,
            y1: s - 2,
        };
        let right = Region {
            x0: split + 1,
            y0: 1,
            x1: s - 2,
            y1: s - 2,
        };
        self.object(rng, left, Cell::GOAL)?;
        self.object(rng, left, Cell::GOAL)?;
        self.object(rng, left, Cell::switch(color))?;
        self.agent(rng, left)?;
        self.agent(rng, right)
    }

    /// Three rooms in a row joined by two switch doors. Switch 1 sits in the
    /// left room, switch 2 in the middle room, goals in the right room.
    fn door_switch_c(&mut self, rng: &mut ChaCha8Rng) -> Option<()> {
        let s = self.size();
        // Right room at least two columns wide, others at least one.
        let w1 = rng.random_range(2..=s - 6);
        let w2 = rng.random_range(w1 + 2..=s - 4);
        let colors = Self::colors(rng, 2);
        self.vertical_wall(w1, 1, s - 2);
        self.vertical_wall(w2, 1, s - 2);
        let d1 = rng.random_range(1..=s - 2);
        let d2 = rng.random_range(1..=s - 2);
        self.door(Pos::new(w1, d1), Cell::door(colors[0], door_state::CLOSED));
        self.door(Pos::new(w2, d2), Cell::door(colors[1], door_state::CLOSED));
        let left = Region {
            x0: 1,
            y0: 1,
            x1: w1 - 1,
            y1: s - 2,
        };
        let mid = Region {
            x0: w1 + 1,
            y0: 1,
            x1: w2 - 1,
            y1: s - 2,
        };
        let right = Region {
            x0: w2 + 1,
            y0: 1,
            x1: s - 2,
            y1: s - 2,
        };
        for _ in 0..3 {
            self.object(rng, right, Cell::GOAL)?;
        }
        self.object(rng, left, Cell::switch(colors[0]))?;
        self.object(rng, mid, Cell::switch(colors[1]))?;
        self.agent(rng, left)?;
        self.agent(rng, mid)?;
        self.agent(rng, right)
    }

    /// Two horizontal corridors, each split by a switch door whose switch is
    /// in the other corridor's start side. Agents 0 and 1 start top-left,
    /// agent 2 bottom-left; two goals top-right, one bottom-right.
    fn door_switch_d(&mut self, rng: &mut ChaCha8Rng) -> Option<()> {
        let s = self.size();
        let h = rng.random_range(4..=s - 5);
        let v_top = rng.random_range(3..=s - 4);
        let v_bot = rng.random_range(3..=s - 4);
        let colors = Self::colors(rng, 2);
        self.horizontal_wall(h, 1, s - 2);
        self.vertical_wall(v_top, 1, h - 1);
        self.vertical_wall(v_bot, h + 1, s - 2);
        let dt = rng.random_range(1..=h - 1);
        let db = rng.random_range(h + 1..=s - 2);
        self.door(
            Pos::new(v_top, dt),
            Cell::door(colors[0], door_state::CLOSED),
        );
        self.door(
            Pos::new(v_bot, db),
            Cell::door(colors[1], door_state::CLOSED),
        );
        let top_left = Region {
            x0: 1,
            y0: 1,
            x1: v_top - 1,
            y1: h - 1,
        };
        let top_right = Region {
            x0: v_top + 1,
            y0: 1,
            x1: s - 2,
            y1: h - 1,
        };
        let bot_left = Region {
            x0: 1,
            y0: h + 1,
            x1: v_bot - 1,
            y1: s - 2,
        };
        let bot_right = Region {
            x0: v_bot + 1,
            y0: h + 1,
            x1: s - 2,
            y1: s - 2,
        };
        self.object(rng, top_right, Cell::GOAL)?;
        self.object(rng, top_right, Cell::GOAL)?;
        self.object(rng, bot_right, Cell::GOAL)?;
        self.object(rng, bot_left, Cell::switch(colors[0]))?;
        self.object(rng, top_left, Cell::switch(colors[1]))?;
        self.agent(rng, top_left)?;
        self.agent(rng, top_left)?;
        self.agent(rng, bot_left)
    }
}

/// Monotone team reachability: doors open once some agent can stand next to
/// the matching switch (or next to the key and the door). Ignores blocking by
/// other agents; the layout rules keep goal rooms wide enough for that.
fn relaxed_solvable(state: &GridState) -> bool {
    let n = state.width * state.height;
    let mut open: Vec<bool> = state.cells.iter().map(|c| c.is_passable()).collect();
    loop {
        let reach: Vec<Vec<bool>> = state
            .agents
            .iter()
            .map(|a| flood(state, &open, a.pos))
            .collect();
        let near = |r: &[bool], p: Pos| Direction::ALL.iter().any(|&d| r[idx(state, p.step(d))]);
        let mut changed = false;
        for i in 0..n {
            let c = state.cells[i];
            if c.kind != ObjectKind::Door || open[i] {
                continue;
            }
            let door = Pos::new(i % state.width, i / state.width);
            let unlocked = reach.iter().any(|r| {
                if !near(r, door) {
                    return false;
                }
                match c.state {
                    door_state::LOCKED => state.cells.iter().enumerate().any(|(j, k)| {
                        k.kind == ObjectKind::Key
                            && k.color == c.color
                            && near(r, Pos::new(j % state.width, j / state.width))
                    }),
                    _ => true,
                }
            });
            let switched = state.cells.iter().enumerate().any(|(j, k)| {
                k.kind == ObjectKind::Switch
                    && k.color == c.color
                    && reach
                        .iter()
                        .any(|r| near(r, Pos::new(j % state.width, j / state.width)))
            });
            let has_switch = state
                .cells
                .iter()
                .any(|k| k.kind == ObjectKind::Switch && k.color == c.color);
            if (has_switch && switched) || (!has_switch && unlocked) {
                open[i] = true;
                changed = true;
            }
        }
        if !changed {
            let goals: Vec<usize> = (0..n)
                .filter(|&i| state.cells[i].kind == ObjectKind::Goal)
                .collect();
            let every_agent = reach.iter().all(|r| goals.iter().any(|&g| r[g]));
            let enough = goals
                .iter()
                .filter(|&&g| reach.iter().any(|r| r[g]))
                .count()
                >= state.agents.len();
            return every_agent && enough;
        }
    }
}

fn idx(state: &GridState, p: Pos) -> usize {
    p.y * state.width + p.x
}

fn flood(state: &GridState, open: &[bool], from: Pos) -> Vec<bool> {
    let mut seen = vec![false; open.len()];
    let mut queue = VecDeque::from([from]);
    seen[idx(state, from)] = true;
    while let Some(p) = queue.pop_front() {
        for d in Direction::ALL {
            let q = p.step(d);
            let i = idx(state, q);
            if !seen[i] && open[i] {
                seen[i] = true;
                queue.push_back(q);
            }
        }
    }
    seen
}
