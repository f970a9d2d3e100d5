//! The `.counts` text format: one `event=value` pair per line, `#` starts a comment,
//! values are nonnegative decimal integers or reals (scientific notation allowed).

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::model::{EventCounts, EventId, MeasurementResult, Provenance};

pub fn import_counts(text: &str) -> Result<MeasurementResult> {
    let mut counts = EventCounts::new();
    let mut seen = HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse { line, message };
        let (name, value) = content
            .split_once('=')
            .ok_or_else(|| parse_err(format!("expected `event=value`, got `{content}`")))?;
        let (name, value) = (name.trim(), value.trim());
        let event: EventId = name.parse().map_err(|_| parse_err(format!("unknown event `{name}`")))?;
        let v: f64 = value.parse().map_err(|_| parse_err(format!("invalid count `{value}` for `{name}`")))?;
        if !v.is_finite() || v < 0.0 {
            return Err(parse_err(format!("count for `{name}` must be finite and >= 0, got `{value}`")));
        }
        if !seen.insert(event) {
            return Err(Error::DuplicateEvent { line, event });
        }
        counts.insert(event, v);
    }
    counts.validate()?;
    Ok(MeasurementResult::new(counts, Provenance::Imported))
}

fn format_count(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e16 {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Canonical rendering, events in canonical order; `import_counts` inverts it exactly.
pub fn export_counts(result: &MeasurementResult) -> String {
    let mut s = String::new();
    for (e, v) in result.counts.iter() {
        s.push_str(e.name());
        s.push('=');
        s.push_str(&format_count(v));
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_lines() {
        let r = import_counts("cycles=1200\ninstructions=1000\n").unwrap();
        assert_eq!(r.get(EventId::Cycles), Some(1200.0));
        assert_eq!(r.get(EventId::Instructions), Some(1000.0));
        assert_eq!(r.provenance, Provenance::Imported);
        assert_eq!(r.counts.len(), 2);
    }

    #[test]
    fn comments_whitespace_and_scientific() {
        let r = import_counts("# header\n  cycles = 1.5e9  # trailing\n\ninstructions=1E9\n").unwrap();
        assert_eq!(r.get(EventId::Cycles), Some(1.5e9));
        assert_eq!(r.get(EventId::Instructions), Some(1e9));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = import_counts("cycles=1\ninstructions=-5\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }), "{e}");
        assert!(matches!(import_counts("cycles 12"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(import_counts("\nwidgets=3"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(import_counts("cycles=abc"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(import_counts("cycles=inf"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(
            import_counts("cycles=1\n# x\ncycles=2"),
            Err(Error::DuplicateEvent { line: 3, event: EventId::Cycles })
        ));
        assert!(matches!(import_counts("l1d_misses=6\nl1d_accesses=5"), Err(Error::Invariant(_))));
    }

    #[test]
    fn export_forms() {
        let counts = [(EventId::Cycles, 1200.0), (EventId::Instructions, 0.5), (EventId::L3Misses, 1.5e-7)];
        let r = MeasurementResult::new(counts.into_iter().collect(), Provenance::Imported);
        let text = export_counts(&r);
        assert_eq!(text, "cycles=1200\ninstructions=5e-1\nl3_misses=1.5e-7\n");
        assert_eq!(import_counts(&text).unwrap(), r);
    }
}
