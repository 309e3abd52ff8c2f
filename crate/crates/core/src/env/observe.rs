use super::{kind, EnvError, GridState, ObjectKind, Pos};

pub const OBS_CHANNELS: usize = 3;

/// One agent's egocentric view.
///
/// `view` is `view_size x view_size x 3` in row-major `[row][col][channel]`
/// order with channels (object kind, color, state). The observing agent sits
/// at the bottom-center cell facing up.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Observation {
    pub view_size: usize,
    pub view: Vec<u8>,
    pub direction: u8,
    pub carrying_kind: u8,
}

impl Observation {
    pub fn at(&self, row: usize, col: usize) -> [u8; 3] {
        let i = (row * self.view_size + col) * OBS_CHANNELS;
        [self.view[i], self.view[i + 1], self.view[i + 2]]
    }

    /// Writes the view as scaled floats (`HWC` layout) into `out`.
    pub fn write_features<T: num_traits::Float>(&self, out: &mut [T]) {
        const SCALE: [f32; 3] = [1.0 / kind::MAX as f32, 1.0 / 5.0, 1.0 / 3.0];
        for (i, (&v, o)) in self.view.iter().zip(out.iter_mut()).enumerate() {
            *o = T::from(f32::from(v) * SCALE[i % 3]).unwrap();
        }
    }

    pub fn feature_len(&self) -> usize {
        self.view.len()
    }
}

/// Renders the egocentric partial view of agent `agent_id`.
pub fn observe(state: &GridState, agent_id: usize) -> Result<Observation, EnvError> {
    let agent = state.agents.get(agent_id).ok_or_else(|| {
        EnvError::Usage(format!(
            "agent {agent_id} out of range for {} agents",
            state.agents.len()
        ))
    })?;
    let v = state.config.view_size;
    let half = (v / 2) as isize;
    let (fx, fy) = agent.dir.delta();
    // Clockwise perpendicular of the facing direction.
    let (rx, ry) = (-fy, fx);

    // Gather raw cells in view coordinates; out-of-grid reads as wall.
    let mut raw = vec![[kind::WALL, 5, 0]; v * v];
    let mut opaque = vec![true; v * v];
    for row in 0..v {
        let fwd = (v - 1 - row) as isize;
        for col in 0..v {
            let lat = col as isize - half;
            let x = agent.pos.x as isize + fwd * fx + lat * rx;
            let y = agent.pos.y as isize + fwd * fy + lat * ry;
            if !state.in_bounds(x, y) {
                continue;
            }
            let p = Pos::new(x as usize, y as usize);
            let cell = state.cell(p);
            let mut enc = [cell.kind.code(), cell.color, cell.state];
            if cell.kind == ObjectKind::Empty {
                enc = [kind::EMPTY, 0, 0];
            }
            if let Some(j) = state.agent_at(p) {
                if j == agent_id {
                    if let Some(obj) = agent.carrying {
                        enc = [obj.kind.code(), obj.color, obj.state];
                    }
                } else {
                    enc = [kind::AGENT, j as u8, state.agents[j].dir.index()];
                }
            }
            raw[row * v + col] = enc;
            opaque[row * v + col] = !cell.see_behind();
        }
    }

    let visible = visibility(v, &opaque);
    let mut view = vec![0u8; v * v * 3];
    for i in 0..v * v {
        if visible[i] {
            view[i * 3..i * 3 + 3].copy_from_slice(&raw[i]);
        } else {
            view[i * 3..i * 3 + 3].copy_from_slice(&[kind::UNSEEN, 0, 0]);
        }
    }
    Ok(Observation {
        view_size: v,
        view,
        direction: agent.dir.index(),
        carrying_kind: agent.carrying.map_or(0, |c| c.kind.code()),
    })
}

/// MiniGrid-style visibility sweep from the agent cell (bottom-center),
/// spreading row by row away from the agent through see-through cells.
fn visibility(v: usize, opaque: &[bool]) -> Vec<bool> {
    let mut mask = vec![false; v * v];
    mask[(v - 1) * v + v / 2] = true;
    for row in (0..v).rev() {
        for col in 0..v - 1 {
            if !mask[row * v + col] || opaque[row * v + col] {
                continue;
            }
            mask[row * v + col + 1] = true;
            if row > 0 {
                mask[(row - 1) * v + col + 1] = true;
                mask[(row - 1) * v + col] = true;
            }
        }
        for col in (1..v).rev() {
            if !mask[row * v + col] || opaque[row * v + col] {
                continue;
            }
            mask[row * v + col - 1] = true;
            if row > 0 {
                mask[(row - 1) * v + col - 1] = true;
                mask[(row - 1) * v + col] = true;
            }
        }
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{AgentState, Cell, Direction, EnvConfig, MapKind};

    fn open_room(agents: &[(usize, usize, Direction)]) -> GridState {
        let mut cfg = EnvConfig::new(MapKind::DoorSwitchA, 12, 0);
        cfg.num_agents = agents.len();
        let mut s = GridState::empty(cfg);
        s.agents = agents
            .iter()
            .enumerate()
            .map(|(id, &(x, y, dir))| AgentState {
                id,
                pos: Pos::new(x, y),
                dir,
                carrying: None,
                done: false,
            })
            .collect();
        s
    }

    #[test]
    fn teammate_two_ahead_is_visible() {
        let s = open_room(&[(5, 8, Direction::North), (5, 6, Direction::West)]);
        let o = observe(&s, 0).unwrap();
        // Agent row 6, col 3; two cells ahead is row 4.
        assert_eq!(o.at(4, 3), [kind::AGENT, 1, Direction::West.index()]);
        assert_eq!(o.at(6, 3), [kind::EMPTY, 0, 0]);
        assert_eq!(o.direction, Direction::North.index());
    }

    #[test]
    fn lateral_axis_follows_heading() {
        // Facing east, a teammate one cell to the south is on the right.
        let s = open_room(&[(5, 5, Direction::East), (5, 6, Direction::North)]);
        let o = observe(&s, 0).unwrap();
        assert_eq!(o.at(6, 4)[0], kind::AGENT);
    }

    #[test]
    fn wall_ahead_hides_the_rest_of_the_column() {
        let mut s = open_room(&[(5, 8, Direction::North), (1, 1, Direction::East)]);
        for x in 1..11 {
            s.set_cell(Pos::new(x, 7), Cell::WALL);
        }
        let o = observe(&s, 0).unwrap();
        assert_eq!(o.at(5, 3)[0], kind::WALL);
        for row in 0..5 {
            for col in 0..7 {
                assert_eq!(o.at(row, col)[0], kind::UNSEEN, "row {row} col {col}");
            }
        }
    }

    #[test]
    fn outside_grid_reads_as_wall() {
        let s = open_room(&[(1, 1, Direction::North), (5, 5, Direction::East)]);
        let o = observe(&s, 0).unwrap();
        // Looking north from (1, 1): the border row is one ahead, and the
        // out-of-grid rows beyond it are occluded by that border.
        assert_eq!(o.at(5, 3)[0], kind::WALL);
        assert_eq!(o.at(6, 2)[0], kind::WALL);
        assert_eq!(o.at(6, 0)[0], kind::UNSEEN);
        assert_eq!(o.at(3, 3)[0], kind::UNSEEN);
        // Unoccluded out-of-grid cells encode as wall.
        let s = open_room(&[(10, 10, Direction::West), (5, 5, Direction::East)]);
        let o = observe(&s, 0).unwrap();
        // Facing west the right side points north; left (col < 3) is south.
        assert_eq!(o.at(6, 2), [kind::WALL, 5, 0]);
    }

    #[test]
    fn carried_object_shows_in_own_cell() {
        let mut s = open_room(&[(5, 5, Direction::East), (8, 8, Direction::East)]);
        s.agents[0].carrying = Some(Cell::key(3));
        let o = observe(&s, 0).unwrap();
        assert_eq!(o.at(6, 3), [kind::KEY, 3, 0]);
        assert_eq!(o.carrying_kind, kind::KEY);
    }

    #[test]
    fn observe_is_pure() {
        let s = open_room(&[(5, 5, Direction::South), (6, 7, Direction::East)]);
        assert_eq!(observe(&s, 1).unwrap(), observe(&s, 1).unwrap());
        assert!(observe(&s, 2).is_err());
    }
}
