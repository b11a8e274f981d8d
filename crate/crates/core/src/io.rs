//! Serialization of matrices, points and sample files.
//!
//! Matrices are written row-major as nested JSON arrays. `serde_json` prints
//! the shortest decimal that round-trips, so values reload bit-exactly.
//! A sample file is JSON lines: a header record followed by one point per line.

use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{KsdError, Result};
use crate::manifolds::Manifold;
use crate::matalg::Mat;
use crate::models::Family;

pub mod matrix_rows {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn to_rows(m: &Mat) -> Vec<Vec<f64>> {
        m.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> std::result::Result<Mat, String> {
        let nr = rows.len();
        let nc = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != nc) {
            return Err("ragged matrix rows".into());
        }
        Ok(Mat::from_fn(nr, nc, |i, j| rows[i][j]))
    }

    pub fn serialize<S: Serializer>(m: &Mat, s: S) -> std::result::Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Mat, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

fn manifold_tag(m: &Manifold) -> &'static str {
    match m {
        Manifold::Stiefel { .. } => "stiefel",
        Manifold::Grassmann { .. } => "grassmann",
        Manifold::Spd { .. } => "spd",
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PointRecord {
    manifold: String,
    #[serde(with = "matrix_rows")]
    value: Mat,
}

pub fn point_to_json(m: &Manifold, x: &Mat) -> String {
    serde_json::to_string(&PointRecord { manifold: manifold_tag(m).into(), value: x.clone() })
        .expect("matrices serialize")
}

pub fn point_from_json(m: &Manifold, s: &str) -> Result<Mat> {
    let rec: PointRecord =
        serde_json::from_str(s).map_err(|e| KsdError::Config(format!("bad point record: {e}")))?;
    if rec.manifold != manifold_tag(m) {
        return Err(KsdError::Config(format!(
            "point tagged {} but sample is on {}",
            rec.manifold,
            manifold_tag(m)
        )));
    }
    m.check_point(&rec.value)?;
    Ok(rec.value)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleHeader {
    pub manifold: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub r: usize,
    pub family: String,
    pub params: Family,
    pub seed: u64,
    pub method: String,
}

impl SampleHeader {
    pub fn new(manifold: &Manifold, family: &Family, seed: u64, method: &str) -> Self {
        let (n, r) = match *manifold {
            Manifold::Stiefel { n, r } | Manifold::Grassmann { n, r } => (n, r),
            Manifold::Spd { n } => (n, n),
        };
        Self {
            manifold: manifold_tag(manifold).into(),
            n,
            r,
            family: family.label().into(),
            params: family.clone(),
            seed,
            method: method.into(),
        }
    }

    pub fn manifold(&self) -> Result<Manifold> {
        match self.manifold.as_str() {
            "stiefel" => Manifold::stiefel(self.n, self.r),
            "grassmann" => Manifold::grassmann(self.n, self.r),
            "spd" => Manifold::spd(self.n),
            other => Err(KsdError::Config(format!("unknown manifold tag {other:?}"))),
        }
    }
}

pub fn write_samples<W: Write>(mut w: W, header: &SampleHeader, points: &[Mat]) -> Result<()> {
    let m = header.manifold()?;
    writeln!(w, "{}", serde_json::to_string(header).expect("header serializes"))?;
    for x in points {
        writeln!(w, "{}", point_to_json(&m, x))?;
    }
    Ok(())
}

pub fn read_samples<R: Read>(r: R) -> Result<(SampleHeader, Vec<Mat>)> {
    let mut lines = BufReader::new(r).lines();
    let first = lines.next().ok_or_else(|| KsdError::Config("empty sample file".into()))??;
    let header: SampleHeader =
        serde_json::from_str(&first).map_err(|e| KsdError::Config(format!("bad sample header: {e}")))?;
    let m = header.manifold()?;
    let mut points = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        points.push(point_from_json(&m, &line)?);
    }
    Ok((header, points))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points_reload_bit_exactly() {
        let m = Manifold::stiefel(3, 2).unwrap();
        let x = crate::matalg::qr_orthonormal(&Mat::from_row_slice(3, 2, &[0.1, 1.0 / 3.0, -2.0, 0.7, 1e-17, 5.0]));
        let back = point_from_json(&m, &point_to_json(&m, &x)).unwrap();
        assert_eq!(back, x);
    }

    #[test]
    fn row_major_layout() {
        let m = Manifold::spd(2).unwrap();
        let x = Mat::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        assert_eq!(point_to_json(&m, &x), r#"{"manifold":"spd","value":[[2.0,0.5],[0.5,1.0]]}"#);
    }

    #[test]
    fn sample_file_roundtrip() {
        let m = Manifold::stiefel(3, 1).unwrap();
        let fam = Family::MatrixFisher { f: Mat::from_row_slice(3, 1, &[1.0, 0.0, 0.0]) };
        let header = SampleHeader::new(&m, &fam, 9, "rejection");
        let pts = vec![Mat::from_row_slice(3, 1, &[0.0, 1.0, 0.0]), Mat::from_row_slice(3, 1, &[0.6, 0.0, 0.8])];
        let mut buf = Vec::new();
        write_samples(&mut buf, &header, &pts).unwrap();
        let (h, p) = read_samples(buf.as_slice()).unwrap();
        assert_eq!(h, header);
        assert_eq!(p, pts);
    }

    #[test]
    fn rejects_wrong_tag_and_off_manifold() {
        let m = Manifold::stiefel(2, 1).unwrap();
        assert!(point_from_json(&m, r#"{"manifold":"spd","value":[[1.0],[0.0]]}"#).is_err());
        assert!(point_from_json(&m, r#"{"manifold":"stiefel","value":[[1.0],[1.0]]}"#).is_err());
        assert!(point_from_json(&m, r#"{"manifold":"stiefel","value":[[1.0],[0.0]],"x":1}"#).is_err());
    }
}
