//! Text formats: the versioned field snapshot and the CSV exports.
//!
//! A snapshot is a header line
//! `# castflow-field v1 nx=<int> nz=<int> W=<float> L=<float>` followed by
//! `nz` rows of `nx` comma-separated values, bottom row (`z = 0`) first.
//! Values are written in shortest round-trip form, so reading a snapshot
//! back reproduces the field exactly.

use std::fmt::Write as _;
use std::path::Path;

use crate::domain::{Field, Grid};
use crate::error::{Error, Result};
use crate::solver::Profile1D;

pub const FIELD_SCHEMA: &str = "castflow-field v1";

pub fn field_to_string(u: &Field) -> String {
    let g = u.grid();
    let mut out = format!("# {FIELD_SCHEMA} nx={} nz={} W={} L={}\n", g.nx, g.nz, g.width, g.height);
    for j in 0..g.nz {
        for i in 0..g.nx {
            if i > 0 {
                out.push(',');
            }
            write!(out, "{}", u.at(i, j)).expect("writing to a string");
        }
        out.push('\n');
    }
    out
}

pub fn field_from_str(text: &str) -> Result<Field> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty snapshot".into()))?;
    let rest = header
        .strip_prefix("# ")
        .and_then(|h| h.strip_prefix(FIELD_SCHEMA))
        .ok_or_else(|| Error::Parse(format!("not a {FIELD_SCHEMA} snapshot: {header:?}")))?;
    let (mut nx, mut nz, mut w, mut l) = (None, None, None, None);
    for item in rest.split_whitespace() {
        let (key, value) =
            item.split_once('=').ok_or_else(|| Error::Parse(format!("malformed header entry {item:?}")))?;
        let bad = |_| Error::Parse(format!("malformed header entry {item:?}"));
        match key {
            "nx" => nx = Some(value.parse::<usize>().map_err(|e| bad(e.to_string()))?),
            "nz" => nz = Some(value.parse::<usize>().map_err(|e| bad(e.to_string()))?),
            "W" => w = Some(value.parse::<f64>().map_err(|e| bad(e.to_string()))?),
            "L" => l = Some(value.parse::<f64>().map_err(|e| bad(e.to_string()))?),
            _ => return Err(Error::Parse(format!("unknown header entry {item:?}"))),
        }
    }
    let (Some(nx), Some(nz), Some(w), Some(l)) = (nx, nz, w, l) else {
        return Err(Error::Parse("header needs nx, nz, W and L".into()));
    };
    let grid = Grid::new(w, l, nx, nz)?;
    let mut values = Vec::with_capacity(grid.len());
    for (row, line) in lines.enumerate() {
        if row >= nz {
            if line.trim().is_empty() {
                continue;
            }
            return Err(Error::Parse(format!("more than nz = {nz} rows")));
        }
        let before = values.len();
        for item in line.split(',') {
            let v: f64 = item
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("row {row}: bad value {item:?}")))?;
            values.push(v);
        }
        if values.len() - before != nx {
            return Err(Error::Parse(format!("row {row} has {} values, expected {nx}", values.len() - before)));
        }
    }
    if values.len() != grid.len() {
        return Err(Error::Parse(format!("expected {nz} rows, found {}", values.len() / nx)));
    }
    Field::new(grid, values)
}

pub fn save_field(path: &Path, u: &Field) -> Result<()> {
    Ok(std::fs::write(path, field_to_string(u))?)
}

pub fn load_field(path: &Path) -> Result<Field> {
    field_from_str(&std::fs::read_to_string(path)?)
}

/// The profile as CSV: a comment line carrying `z0` and the one-sided
/// fluxes, then `z,u,slope` rows.
pub fn profile_to_csv(prof: &Profile1D) -> String {
    let p = &prof.params;
    let mut out = format!(
        "# castflow-profile1d v1 p={} a={} ell={} m_plus={} m_minus={} L={} z0={:.12} flux_below={} flux_above={}\nz,u,slope\n",
        p.p, p.a, p.ell, p.m_plus, p.m_minus, prof.length, prof.z0, prof.flux_below, prof.flux_above
    );
    for (z, u) in prof.z.iter().zip(&prof.u) {
        // `+ 0.0` turns a negative zero into a positive one
        writeln!(out, "{z},{},{}", u + 0.0, prof.slope(*z) + 0.0).expect("writing to a string");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_and_layout() {
        let u = Field::from_fn(Grid::new(2.0, 2.0, 3, 3).unwrap(), |x, z| x + 10.0 * z);
        let text = field_to_string(&u);
        assert_eq!(text, "# castflow-field v1 nx=3 nz=3 W=2 L=2\n0,1,2\n10,11,12\n20,21,22\n");
    }

    #[test]
    fn malformed_snapshots_are_rejected() {
        for bad in [
            "",
            "# castflow-field v2 nx=3 nz=3 W=1 L=1\n0,0,0\n0,0,0\n0,0,0\n",
            "# castflow-field v1 nx=3 nz=3 W=1\n0,0,0\n0,0,0\n0,0,0\n",
            "# castflow-field v1 nx=3 nz=3 W=1 L=1 q=2\n0,0,0\n0,0,0\n0,0,0\n",
            "# castflow-field v1 nx=3 nz=3 W=1 L=1\n0,0,0\n0,0\n0,0,0\n",
            "# castflow-field v1 nx=3 nz=3 W=1 L=1\n0,0,0\n0,0,0\n",
            "# castflow-field v1 nx=3 nz=3 W=1 L=1\n0,0,0\n0,x,0\n0,0,0\n",
            "# castflow-field v1 nx=3 nz=3 W=1 L=1\n0,0,0\n0,0,0\n0,0,0\n1,1,1\n",
        ] {
            assert!(matches!(field_from_str(bad), Err(Error::Parse(_))), "{bad:?}");
        }
        // trailing blank lines are tolerated
        assert!(field_from_str("# castflow-field v1 nx=3 nz=3 W=1 L=1\n0,0,0\n0,0,0\n0,0,0\n\n").is_ok());
    }

    proptest! {
        #[test]
        fn snapshot_round_trip_is_exact(
            nx in 3usize..6,
            nz in 3usize..6,
            w in 0.1f64..10.0,
            seed in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO, 36),
        ) {
            let g = Grid::new(w, 1.0 / 3.0, nx, nz).unwrap();
            let u = Field::new(g, seed[..g.len()].to_vec()).unwrap();
            let back = field_from_str(&field_to_string(&u)).unwrap();
            prop_assert_eq!(back.grid(), u.grid());
            for (a, b) in back.values().iter().zip(u.values()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
