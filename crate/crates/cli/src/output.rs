//! CSV artifacts. Files are written to a temporary sibling and renamed into
//! place.

use std::fs;
use std::io::Write;
use std::path::Path;

use tempfile::NamedTempFile;

use crate::error::RunError;
use crate::experiment::CaseResult;

pub const TABLE_HEADER: [&str; 9] = [
    "M", "theta1", "theta2", "err_fgp", "std_fgp", "zeta1", "zeta2", "err_sgp", "std_sgp",
];

pub const POINTS_HEADER: [&str; 7] = [
    "x", "u_true", "u_bk", "mean_fgp", "std_fgp", "mean_sgp", "std_sgp",
];

pub const FAILURES_HEADER: [&str; 3] = ["M", "stage", "message"];

/// Six significant digits in scientific notation.
pub fn sci6(v: f64) -> String {
    format!("{v:.5e}")
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(RunError::io(dir))?;
    let mut tmp = NamedTempFile::new_in(dir).map_err(RunError::io(dir))?;
    tmp.write_all(bytes).map_err(RunError::io(tmp.path()))?;
    tmp.as_file().sync_all().map_err(RunError::io(tmp.path()))?;
    tmp.persist(path).map_err(|e| RunError::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

fn to_csv<I, R>(header: &[&str], rows: I) -> Vec<u8>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    // writing into a Vec cannot fail
    w.write_record(header).expect("in-memory csv");
    for row in rows {
        w.write_record(row).expect("in-memory csv");
    }
    w.into_inner().expect("in-memory csv")
}

/// One row per case; failed cases keep their `M` and carry `NaN` elsewhere.
pub fn table_csv(rows: &[(usize, Option<CaseResult>)]) -> Vec<u8> {
    to_csv(
        &TABLE_HEADER,
        rows.iter().map(|(m, r)| {
            let mut rec = vec![m.to_string()];
            match r {
                Some(r) => rec.extend(
                    [
                        r.theta1, r.theta2, r.err_fgp, r.std_fgp, r.zeta1, r.zeta2, r.err_sgp,
                        r.std_sgp,
                    ]
                    .map(sci6),
                ),
                None => rec.extend(std::iter::repeat_n(sci6(f64::NAN), 8)),
            }
            rec
        }),
    )
}

pub fn failures_csv(rows: &[(usize, String, String)]) -> Vec<u8> {
    to_csv(
        &FAILURES_HEADER,
        rows.iter()
            .map(|(m, stage, msg)| vec![m.to_string(), stage.clone(), msg.clone()]),
    )
}

/// Columns of the points file, each with one entry per mesh node. Values are
/// written in shortest round-trip form.
pub fn points_csv(columns: [&[f64]; 7]) -> Vec<u8> {
    let n = columns[0].len();
    to_csv(
        &POINTS_HEADER,
        (0..n).map(|i| columns.iter().map(move |c| format!("{:e}", c[i]))),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sci6(4.43e-3), "4.43000e-3");
        assert_eq!(sci6(0.0), "0.00000e0");
        assert_eq!(sci6(123456.789), "1.23457e5");
    }

    #[test]
    fn table_layout() {
        let r = CaseResult {
            m: 4,
            theta1: 0.5,
            theta2: 0.0,
            err_fgp: 1e-3,
            std_fgp: 2e-2,
            zeta1: 0.05,
            zeta2: 0.06,
            err_sgp: 0.09,
            std_sgp: 0.07,
        };
        let text = String::from_utf8(table_csv(&[(4, Some(r)), (5, None)])).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "M,theta1,theta2,err_fgp,std_fgp,zeta1,zeta2,err_sgp,std_sgp");
        assert_eq!(
            lines[1],
            "4,5.00000e-1,0.00000e0,1.00000e-3,2.00000e-2,5.00000e-2,6.00000e-2,9.00000e-2,7.00000e-2"
        );
        assert!(lines[2].starts_with("5,NaN,NaN"));
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub").join("a.csv");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }
}
