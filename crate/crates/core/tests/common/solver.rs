//! Cooperative solvability by exhaustive search.
//!
//! `abstract_solvable` searches joint states where agents act one at a time
//! and facing is abstracted away (turning is always possible, so only which
//! neighbour an agent interacts with matters). Every plan it finds can be
//! executed in the real environment with the idle agents choosing `Noop`,
//! so a positive answer is a real witness.
//!
//! `exact_min_steps` is a plain breadth-first search over real joint
//! transitions, usable on the smallest maps to cross-check the abstraction.

use std::collections::{HashSet, VecDeque};

use mirlab::env::{door_state, switch_state, Action, GridState, ObjectKind};

/// Packed joint state: agent cells, carried key colour (0 = none, else
/// colour + 1), done flags, then door states, switch states and key
/// presence (1 = on the floor).
type Joint = [u8; 16];

struct Layout {
    width: usize,
    agents: usize,
    /// Static passability ignoring doors.
    floor: Vec<bool>,
    goal: Vec<bool>,
    doors: Vec<(usize, u8)>,
    switches: Vec<(usize, u8)>,
    keys: Vec<(usize, u8)>,
}

impl Layout {
    fn neighbours(&self, i: usize) -> [usize; 4] {
        [i + 1, i - 1, i + self.width, i - self.width]
    }

    fn carry(&self, a: usize) -> usize {
        self.agents + a
    }

    fn done(&self, a: usize) -> usize {
        2 * self.agents + a
    }

    fn door(&self, d: usize) -> usize {
        3 * self.agents + d
    }

    fn switch(&self, s: usize) -> usize {
        3 * self.agents + self.doors.len() + s
    }

    fn key(&self, k: usize) -> usize {
        3 * self.agents + self.doors.len() + self.switches.len() + k
    }

    fn passable(&self, j: &Joint, cell: usize) -> bool {
        if let Some(d) = self.doors.iter().position(|&(c, _)| c == cell) {
            return j[self.door(d)] == door_state::OPEN;
        }
        if let Some(k) = self.keys.iter().position(|&(c, _)| c == cell) {
            return j[self.key(k)] == 0;
        }
        self.floor[cell]
    }

    fn occupied(&self, j: &Joint, cell: usize) -> bool {
        j[..self.agents].iter().any(|&p| p as usize == cell)
    }
}

pub fn abstract_solvable(state: &GridState) -> bool {
    let w = state.width;
    let k = state.agents.len();
    let mut layout = Layout {
        width: w,
        agents: k,
        floor: Vec::new(),
        goal: Vec::new(),
        doors: Vec::new(),
        switches: Vec::new(),
        keys: Vec::new(),
    };
    for (i, c) in state.cells.iter().enumerate() {
        layout
            .floor
            .push(matches!(c.kind, ObjectKind::Empty | ObjectKind::Goal));
        layout.goal.push(c.kind == ObjectKind::Goal);
        match c.kind {
            ObjectKind::Door => layout.doors.push((i, c.color)),
            ObjectKind::Switch => layout.switches.push((i, c.color)),
            ObjectKind::Key => layout.keys.push((i, c.color)),
            _ => {}
        }
    }
    assert!(
        layout.key(layout.keys.len()) <= 16,
        "joint state does not fit the packed layout"
    );
    assert!(state.cells.len() <= 256, "cell indices must fit a byte");
    let mut start: Joint = [0; 16];
    for (a, agent) in state.agents.iter().enumerate() {
        start[a] = (agent.pos.y * w + agent.pos.x) as u8;
    }
    for (d, &(i, _)) in layout.doors.iter().enumerate() {
        start[layout.door(d)] = state.cells[i].state;
    }
    for (s, &(i, _)) in layout.switches.iter().enumerate() {
        start[layout.switch(s)] = state.cells[i].state;
    }
    for key in 0..layout.keys.len() {
        start[layout.key(key)] = 1;
    }
    let all_done = |j: &Joint| (0..k).all(|a| j[layout.done(a)] == 1);
    let mut seen = HashSet::from([start]);
    let mut queue = VecDeque::from([start]);
    let mut next = Vec::new();
    while let Some(j) = queue.pop_front() {
        if all_done(&j) {
            return true;
        }
        next.clear();
        successors(&j, &layout, &mut next);
        for &s in &next {
            if seen.insert(s) {
                queue.push_back(s);
            }
        }
    }
    false
}

fn successors(j: &Joint, l: &Layout, out: &mut Vec<Joint>) {
    for a in 0..l.agents {
        if j[l.done(a)] == 1 {
            continue;
        }
        let here = j[a] as usize;
        for n in l.neighbours(here) {
            // Move.
            if l.passable(j, n) && !l.occupied(j, n) {
                let mut s = *j;
                s[a] = n as u8;
                if l.goal[n] {
                    s[l.done(a)] = 1;
                }
                out.push(s);
            }
            // Pick up a key.
            if let Some(k) = l.keys.iter().position(|&(c, _)| c == n) {
                if j[l.key(k)] == 1 && j[l.carry(a)] == 0 {
                    let mut s = *j;
                    s[l.key(k)] = 0;
                    s[l.carry(a)] = l.keys[k].1 + 1;
                    out.push(s);
                }
            }
            // Toggle a hand-operated door.
            if let Some(d) = l.doors.iter().position(|&(c, _)| c == n) {
                let color = l.doors[d].1;
                let switched = l.switches.iter().any(|&(_, c)| c == color);
                if !switched && !l.occupied(j, n) {
                    let has_key = j[l.carry(a)] == color + 1;
                    let next = match j[l.door(d)] {
                        door_state::LOCKED if has_key => Some(door_state::OPEN),
                        door_state::LOCKED => None,
                        door_state::CLOSED => Some(door_state::OPEN),
                        _ => Some(door_state::CLOSED),
                    };
                    if let Some(v) = next {
                        let mut s = *j;
                        s[l.door(d)] = v;
                        out.push(s);
                    }
                }
            }
            // Flip a switch: every door of its colour toggles, except that
            // an occupied open door stays open.
            if let Some(sw) = l.switches.iter().position(|&(c, _)| c == n) {
                let color = l.switches[sw].1;
                let mut s = *j;
                s[l.switch(sw)] = if j[l.switch(sw)] == switch_state::ON {
                    switch_state::OFF
                } else {
                    switch_state::ON
                };
                for (d, &(cell, c)) in l.doors.iter().enumerate() {
                    if c != color {
                        continue;
                    }
                    s[l.door(d)] = match j[l.door(d)] {
                        door_state::CLOSED => door_state::OPEN,
                        door_state::OPEN if !l.occupied(j, cell) => door_state::CLOSED,
                        other => other,
                    };
                }
                out.push(s);
            }
        }
    }
}

/// Fewest real joint steps to complete the episode, or `None` if the
/// horizon runs out first. Exponential in the agent count; small maps only.
pub fn exact_min_steps(state: &GridState) -> Option<u32> {
    let k = state.agents.len();
    let joint: Vec<Vec<Action>> = (0..Action::COUNT.pow(k as u32))
        .map(|mut code| {
            (0..k)
                .map(|_| {
                    let a = Action::ALL[code % Action::COUNT];
                    code /= Action::COUNT;
                    a
                })
                .collect()
        })
        // Drop is never needed and would only grow the search.
        .filter(|acts: &Vec<Action>| !acts.contains(&Action::Drop))
        .collect();
    let key = |s: &GridState| {
        let mut c = s.clone();
        c.t = 0;
        c
    };
    let mut seen = HashSet::from([key(state)]);
    let mut frontier = vec![state.clone()];
    let mut depth = 0;
    while !frontier.is_empty() {
        depth += 1;
        let mut next = Vec::new();
        for s in &frontier {
            for acts in &joint {
                let (n, out) = s.step(acts).expect("valid joint action");
                if out.completed {
                    return Some(depth);
                }
                if !out.terminated && seen.insert(key(&n)) {
                    next.push(n);
                }
            }
        }
        frontier = next;
    }
    None
}
