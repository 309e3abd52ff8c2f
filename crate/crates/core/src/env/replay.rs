use std::fmt::Write as _;

use super::{generate_map, Action, EnvConfig, EnvError, GridState, MapKind, StepOutcome};

pub const REPLAY_COLUMNS: &str = "map_kind,size,agents,seed,T_max";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayHeader {
    pub map_kind: MapKind,
    pub size: usize,
    pub agents: usize,
    pub seed: u64,
    pub max_steps: u32,
}

impl ReplayHeader {
    pub fn from_config(cfg: &EnvConfig) -> Self {
        Self {
            map_kind: cfg.map_kind,
            size: cfg.grid_size,
            agents: cfg.num_agents,
            seed: cfg.seed,
            max_steps: cfg.max_steps,
        }
    }

    pub fn env_config(&self, view_size: usize) -> EnvConfig {
        EnvConfig {
            map_kind: self.map_kind,
            grid_size: self.size,
            num_agents: self.agents,
            max_steps: self.max_steps,
            view_size,
            seed: self.seed,
        }
    }
}

/// Actions-only episode record. Text form: an optional column-name line,
/// one header value line (`map_kind,size,agents,seed,T_max`), then one line
/// of comma-separated action integers per step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Replay {
    pub header: ReplayHeader,
    pub steps: Vec<Vec<Action>>,
}

pub struct ReplayFrame {
    pub state: GridState,
    pub outcome: Option<StepOutcome>,
}

impl Replay {
    pub fn new(cfg: &EnvConfig) -> Self {
        Self {
            header: ReplayHeader::from_config(cfg),
            steps: Vec::new(),
        }
    }

    pub fn to_text(&self) -> String {
        let h = &self.header;
        let mut out = format!(
            "{REPLAY_COLUMNS}\n{},{},{},{},{}\n",
            h.map_kind, h.size, h.agents, h.seed, h.max_steps
        );
        for step in &self.steps {
            let line: Vec<String> = step.iter().map(|a| a.index().to_string()).collect();
            let _ = writeln!(out, "{}", line.join(","));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, EnvError> {
        let err = |line: usize, message: String| EnvError::Parse { line, message };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let (mut n, mut line) = lines.next().ok_or_else(|| err(1, "empty replay".into()))?;
        if line == REPLAY_COLUMNS {
            (n, line) = lines
                .next()
                .ok_or_else(|| err(n + 1, "missing header values".into()))?;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 5 {
            return Err(err(
                n,
                format!("header needs 5 fields, got {}", fields.len()),
            ));
        }
        let num = |i: usize, what: &str| -> Result<u64, EnvError> {
            fields[i]
                .parse::<u64>()
                .map_err(|_| err(n, format!("bad {what} `{}`", fields[i])))
        };
        let header = ReplayHeader {
            map_kind: fields[0]
                .parse()
                .map_err(|e: EnvError| err(n, e.to_string()))?,
            size: num(1, "size")? as usize,
            agents: num(2, "agent count")? as usize,
            seed: num(3, "seed")?,
            max_steps: num(4, "T_max")? as u32,
        };
        let mut steps = Vec::new();
        for (n, line) in lines {
            let step = line
                .split(',')
                .map(|f| {
                    f.trim()
                        .parse::<usize>()
                        .ok()
                        .and_then(Action::from_index)
                        .ok_or_else(|| err(n, format!("bad action `{}`", f.trim())))
                })
                .collect::<Result<Vec<_>, _>>()?;
            if step.len() != header.agents {
                return Err(err(
                    n,
                    format!("expected {} actions, got {}", header.agents, step.len()),
                ));
            }
            steps.push(step);
        }
        Ok(Replay { header, steps })
    }

    /// Re-simulates the episode from its header. Actions after termination
    /// are ignored.
    pub fn simulate(&self, view_size: usize) -> Result<Vec<ReplayFrame>, EnvError> {
        let mut state = generate_map(&self.header.env_config(view_size))?;
        let mut frames = vec![ReplayFrame {
            state: state.clone(),
            outcome: None,
        }];
        for step in &self.steps {
            if state.is_terminated() {
                break;
            }
            let outcome = state.advance(step)?;
            frames.push(ReplayFrame {
                state: state.clone(),
                outcome: Some(outcome),
            });
        }
        Ok(frames)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut r = Replay::new(&EnvConfig::new(MapKind::DoorSwitchC, 8, 99));
        r.steps
            .push(vec![Action::Forward, Action::Toggle, Action::Noop]);
        r.steps
            .push(vec![Action::TurnLeft, Action::Pickup, Action::Drop]);
        assert_eq!(Replay::parse(&r.to_text()).unwrap(), r);
    }

    #[test]
    fn header_without_column_line() {
        let r = Replay::parse("DoorKeyB,6,2,5,144\n2,2\n").unwrap();
        assert_eq!(r.header.seed, 5);
        assert_eq!(r.steps, vec![vec![Action::Forward, Action::Forward]]);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = Replay::parse("map_kind,size,agents,seed,T_max\nDoorKeyB,6,2,5,144\n2,2\n2,9\n")
            .unwrap_err();
        assert_eq!(
            e,
            EnvError::Parse {
                line: 4,
                message: "bad action `9`".into()
            }
        );
        let e = Replay::parse("DoorKeyB,6,2,5,144\n2\n").unwrap_err();
        assert!(matches!(e, EnvError::Parse { line: 2, .. }));
        let e = Replay::parse("DoorKeyZ,6,2,5,144\n").unwrap_err();
        assert!(matches!(e, EnvError::Parse { line: 1, .. }));
    }

    #[test]
    fn empty_action_list_gives_one_frame() {
        let r = Replay::new(&EnvConfig::new(MapKind::DoorKeyB, 6, 3));
        assert_eq!(r.simulate(7).unwrap().len(), 1);
    }
}
