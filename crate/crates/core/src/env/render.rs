use super::{door_state, GridState, ObjectKind, Pos};

/// One character per cell: `#` wall, `.` floor, `D`/`d` closed/open door,
/// `K` key, `S` switch, `G` goal, digits for agents. Rows end with `\n`.
pub fn render_ascii(state: &GridState) -> String {
    let mut out = String::with_capacity((state.width + 1) * state.height);
    for y in 0..state.height {
        for x in 0..state.width {
            let p = Pos::new(x, y);
            let ch = match state.agent_at(p) {
                Some(k) => char::from_digit(k as u32 % 10, 10).unwrap_or('?'),
                None => {
                    let c = state.cell(p);
                    match c.kind {
                        ObjectKind::Empty => '.',
                        ObjectKind::Wall => '#',
                        ObjectKind::Door if c.state == door_state::OPEN => 'd',
                        ObjectKind::Door => 'D',
                        ObjectKind::Key => 'K',
                        ObjectKind::Switch => 'S',
                        ObjectKind::Goal => 'G',
                    }
                }
            };
            out.push(ch);
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{generate_map, EnvConfig, MapKind};

    #[test]
    fn renders_every_object() {
        let s = generate_map(&EnvConfig::new(MapKind::DoorKeyB, 6, 17)).unwrap();
        let text = render_ascii(&s);
        assert_eq!(text.lines().count(), 6);
        assert!(text.lines().all(|l| l.len() == 6));
        for ch in ['#', 'D', 'K', 'G', '0', '1'] {
            assert!(text.contains(ch), "missing {ch} in\n{text}");
        }
        assert_eq!(text.matches('G').count(), 2);
    }
}
