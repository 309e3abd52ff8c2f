//! Text playback of saved episodes.

use std::fmt::Write as _;

use super::HarnessError;
use crate::env::{map_name, render_ascii, Replay};

/// Re-simulates a replay and draws one ASCII frame per step. The last frame
/// carries the team reward (nonzero only for a completed episode).
pub fn render_replay(text: &str) -> Result<String, HarnessError> {
    let replay = Replay::parse(text)?;
    let frames = replay.simulate(7)?;
    let h = &replay.header;
    let mut out = format!(
        "{} seed {} agents {} T_max {}\n",
        map_name(h.map_kind, h.size),
        h.seed,
        h.agents,
        h.max_steps
    );
    for (i, f) in frames.iter().enumerate() {
        let _ = writeln!(out, "\nstep {}", f.state.t);
        out.push_str(&render_ascii(&f.state));
        if i + 1 == frames.len() {
            let (reward, status) = match &f.outcome {
                Some(o) if o.completed => (o.team_reward, "completed"),
                Some(o) if o.terminated => (o.team_reward, "timed out"),
                _ => (0.0, "unfinished"),
            };
            let _ = writeln!(out, "team reward: {reward} ({status})");
        }
    }
    Ok(out)
}
