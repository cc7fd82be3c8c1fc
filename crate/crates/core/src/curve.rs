//! Euler characteristic curves: prefix sums of the VCEC, zero crossings and
//! CSV/JSON serialization.
//!
//! Thresholds are printed with the shortest decimal form that parses back to
//! the same `f32`, so files round-trip exactly and integer-valued thresholds
//! print without a fractional part (`5`, not `5.0`).

use std::io::{BufWriter, Write};
use std::str::FromStr;

use serde::Deserialize;

use crate::engine::GlobalVcec;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EccPoint {
    pub threshold: f32,
    pub chi: i64,
}

/// `(threshold, χ)` pairs with strictly increasing thresholds.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EccCurve {
    points: Vec<EccPoint>,
}

impl EccCurve {
    pub fn from_points(points: Vec<EccPoint>) -> Result<Self> {
        if let Some(w) = points.windows(2).find(|w| !(w[0].threshold < w[1].threshold)) {
            return Err(Error::Parse {
                what: "curve",
                detail: format!(
                    "thresholds must increase strictly ({} then {})",
                    w[0].threshold, w[1].threshold
                ),
            });
        }
        if let Some(p) = points.iter().find(|p| !p.threshold.is_finite()) {
            return Err(Error::NonFinite(p.threshold));
        }
        Ok(EccCurve { points })
    }

    pub fn points(&self) -> &[EccPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn last_chi(&self) -> Option<i64> {
        self.points.last().map(|p| p.chi)
    }

    /// Consecutive differences; inverse of [`vcec_to_ecc`].
    pub fn to_vcec(&self) -> GlobalVcec {
        let mut prev = 0;
        self.points
            .iter()
            .map(|p| {
                let d = p.chi - prev;
                prev = p.chi;
                (p.threshold, d)
            })
            .collect()
    }
}

pub fn vcec_to_ecc(vcec: &GlobalVcec) -> Result<EccCurve> {
    if vcec.is_empty() {
        return Err(Error::EmptyVcec);
    }
    let mut chi = 0;
    let points = vcec
        .iter()
        .map(|(threshold, delta)| {
            chi += delta;
            EccPoint { threshold, chi }
        })
        .collect();
    Ok(EccCurve { points })
}

/// Thresholds where χ is exactly zero or has the opposite strict sign of the
/// previous point. A sign change is reported at its right endpoint.
pub fn zero_crossings(curve: &EccCurve) -> Vec<f32> {
    let mut out = Vec::new();
    let mut prev: Option<i64> = None;
    for p in curve.points() {
        let flips = prev.is_some_and(|q| q.signum() * p.chi.signum() < 0);
        if p.chi == 0 || flips {
            out.push(p.threshold);
        }
        prev = Some(p.chi);
    }
    out
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CurveFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for CurveFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(CurveFormat::Csv),
            "json" => Ok(CurveFormat::Json),
            other => Err(Error::Parse {
                what: "format",
                detail: format!("unknown format `{other}` (expected csv or json)"),
            }),
        }
    }
}

pub const CSV_HEADER: &str = "threshold,euler_characteristic";

pub fn format_curve(curve: &EccCurve, format: CurveFormat) -> String {
    let mut buf = Vec::new();
    write_points(curve, format, &mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("curve text is ASCII")
}

fn write_points(curve: &EccCurve, format: CurveFormat, dest: &mut impl Write) -> std::io::Result<()> {
    match format {
        CurveFormat::Csv => {
            writeln!(dest, "{CSV_HEADER}")?;
            for p in curve.points() {
                writeln!(dest, "{},{}", p.threshold, p.chi)?;
            }
        }
        CurveFormat::Json => {
            dest.write_all(b"[")?;
            for (i, p) in curve.points().iter().enumerate() {
                if i > 0 {
                    dest.write_all(b",")?;
                }
                write!(dest, "{{\"t\":{},\"chi\":{}}}", p.threshold, p.chi)?;
            }
            dest.write_all(b"]")?;
        }
    }
    Ok(())
}

/// Streams the curve to `dest` through a buffer.
pub fn write_curve(curve: &EccCurve, format: CurveFormat, dest: impl Write) -> Result<()> {
    let mut dest = BufWriter::new(dest);
    write_points(curve, format, &mut dest)?;
    dest.flush()?;
    Ok(())
}

fn parse_threshold(text: &str) -> Result<f32> {
    let t: f32 = text.trim().parse().map_err(|_| Error::Parse {
        what: "curve",
        detail: format!("`{text}` is not a threshold"),
    })?;
    Ok(t)
}

#[derive(Deserialize)]
struct JsonPoint {
    t: serde_json::Number,
    chi: i64,
}

pub fn parse_curve(text: &str, format: CurveFormat) -> Result<EccCurve> {
    let bad = |detail: String| Error::Parse {
        what: "curve",
        detail,
    };
    let points = match format {
        CurveFormat::Csv => {
            let mut lines = text.lines();
            match lines.next() {
                Some(h) if h.trim() == CSV_HEADER => {}
                other => return Err(bad(format!("missing header, found {other:?}"))),
            }
            lines
                .filter(|l| !l.trim().is_empty())
                .map(|line| {
                    let (t, chi) = line
                        .split_once(',')
                        .ok_or_else(|| bad(format!("expected two fields in `{line}`")))?;
                    Ok(EccPoint {
                        threshold: parse_threshold(t)?,
                        chi: chi
                            .trim()
                            .parse()
                            .map_err(|_| bad(format!("`{chi}` is not an integer")))?,
                    })
                })
                .collect::<Result<Vec<_>>>()?
        }
        CurveFormat::Json => {
            // `Number` keeps the literal text, so thresholds are parsed
            // straight to f32 without an f64 detour.
            let raw: Vec<JsonPoint> =
                serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
            raw.into_iter()
                .map(|p| {
                    Ok(EccPoint {
                        threshold: parse_threshold(&p.t.to_string())?,
                        chi: p.chi,
                    })
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    EccCurve::from_points(points)
}

pub const VCEC_CSV_HEADER: &str = "threshold,change";

/// Raw VCEC as CSV (`threshold,change`).
pub fn format_vcec(vcec: &GlobalVcec) -> String {
    let mut buf = Vec::new();
    write_vcec(vcec, &mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("VCEC text is ASCII")
}

pub fn write_vcec(vcec: &GlobalVcec, dest: impl Write) -> Result<()> {
    let mut dest = BufWriter::new(dest);
    writeln!(dest, "{VCEC_CSV_HEADER}")?;
    for (t, d) in vcec.iter() {
        writeln!(dest, "{t},{d}")?;
    }
    dest.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn curve(points: &[(f32, i64)]) -> EccCurve {
        EccCurve::from_points(
            points
                .iter()
                .map(|&(threshold, chi)| EccPoint { threshold, chi })
                .collect(),
        )
        .unwrap()
    }

    fn pairs(c: &EccCurve) -> Vec<(f32, i64)> {
        c.points().iter().map(|p| (p.threshold, p.chi)).collect()
    }

    #[test]
    fn prefix_sum_examples() {
        let ring: GlobalVcec = [(0.0, 0), (9.0, 1)].into_iter().collect();
        assert_eq!(pairs(&vcec_to_ecc(&ring).unwrap()), vec![(0.0, 0), (9.0, 1)]);
        let flat: GlobalVcec = [(5.0, 1)].into_iter().collect();
        assert_eq!(pairs(&vcec_to_ecc(&flat).unwrap()), vec![(5.0, 1)]);
        let stairs: GlobalVcec = [(1.0, 1), (2.0, 0), (3.0, 0), (4.0, 0)].into_iter().collect();
        assert_eq!(
            pairs(&vcec_to_ecc(&stairs).unwrap()),
            vec![(1.0, 1), (2.0, 1), (3.0, 1), (4.0, 1)]
        );
        assert!(matches!(vcec_to_ecc(&GlobalVcec::new()), Err(Error::EmptyVcec)));
    }

    #[test]
    fn zero_crossing_examples() {
        assert!(zero_crossings(&curve(&[(0.0, 1), (9.0, 1)])).is_empty());
        assert_eq!(zero_crossings(&curve(&[(0.0, 0), (9.0, 1)])), vec![0.0]);
        assert_eq!(
            zero_crossings(&curve(&[(1.0, 3), (2.0, -2), (3.0, 1)])),
            vec![2.0, 3.0]
        );
    }

    #[test]
    fn serialization_examples() {
        assert_eq!(
            format_curve(&curve(&[(5.0, 1)]), CurveFormat::Csv),
            "threshold,euler_characteristic\n5,1\n"
        );
        assert_eq!(
            format_curve(&curve(&[(0.0, 0), (9.0, 1)]), CurveFormat::Json),
            r#"[{"t":0,"chi":0},{"t":9,"chi":1}]"#
        );
        let c = curve(&[(0.1, -4)]);
        for fmt in [CurveFormat::Csv, CurveFormat::Json] {
            let back = parse_curve(&format_curve(&c, fmt), fmt).unwrap();
            assert_eq!(back.points()[0].threshold.to_bits(), 0.1f32.to_bits());
        }
    }

    #[test]
    fn unsorted_points_are_rejected() {
        assert!(EccCurve::from_points(vec![
            EccPoint { threshold: 2.0, chi: 1 },
            EccPoint { threshold: 1.0, chi: 1 },
        ])
        .is_err());
        assert!(parse_curve("t,chi\n1,1\n", CurveFormat::Csv).is_err());
    }

    fn any_vcec() -> impl Strategy<Value = GlobalVcec> {
        prop::collection::btree_map(
            any::<f32>().prop_filter("finite", |v| v.is_finite()).prop_map(|v| v.to_bits()),
            -50i64..50,
            1..64,
        )
        .prop_map(|m| m.into_iter().map(|(b, d)| (f32::from_bits(b), d)).collect())
    }

    proptest! {
        #[test]
        fn differencing_recovers_vcec(v in any_vcec()) {
            let c = vcec_to_ecc(&v).unwrap();
            prop_assert_eq!(c.to_vcec(), v.clone());
            prop_assert_eq!(c.last_chi(), Some(v.total()));
        }

        #[test]
        fn serialization_round_trips(v in any_vcec()) {
            let c = vcec_to_ecc(&v).unwrap();
            for fmt in [CurveFormat::Csv, CurveFormat::Json] {
                let back = parse_curve(&format_curve(&c, fmt), fmt).unwrap();
                let bits = |c: &EccCurve| c.points().iter().map(|p| (p.threshold.to_bits(), p.chi)).collect::<Vec<_>>();
                prop_assert_eq!(bits(&back), bits(&c));
            }
        }
    }
}
