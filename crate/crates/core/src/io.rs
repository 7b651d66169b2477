//! File formats: NDJSON diagnostic streams, 16-bit PGM snapshots and the
//! CSV tables consumed by the plotting scripts.

use std::io::{BufRead, Read, Write};

use serde::Serialize;

use crate::diagnostics::SpectrumProfile;
use crate::lagrangian::TrajectoryRecord;
use crate::spectral::{Dimension, GridField, SpectralField};
use crate::{Error, Result};

/// Appends one JSON document per line.
pub struct NdjsonWriter<W: Write> {
    inner: W,
    lines: usize,
}

impl<W: Write> NdjsonWriter<W> {
    pub fn new(inner: W) -> Self {
        NdjsonWriter { inner, lines: 0 }
    }

    pub fn write<T: Serialize>(&mut self, value: &T) -> Result<()> {
        serde_json::to_writer(&mut self.inner, value)?;
        self.inner.write_all(b"\n")?;
        self.lines += 1;
        Ok(())
    }

    pub fn lines(&self) -> usize {
        self.lines
    }

    pub fn into_inner(mut self) -> Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

/// Parses an NDJSON stream, skipping blank lines.
pub fn read_ndjson<T: serde::de::DeserializeOwned, R: BufRead>(reader: R) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

/// The `x`-`y` plane at the first remaining index (the whole grid in 2D),
/// row `j` holding `y = j/M`.
fn plane(g: &GridField) -> &[f64] {
    let m = g.size();
    &g.samples()[..m * m]
}

/// Binary 16-bit PGM (P5) of the `x`-`y` plane, rows ordered by `y`,
/// values mapped affinely from `[−max|f|, max|f|]` onto `[0, 65535]`.
pub fn write_pgm<W: Write>(g: &GridField, mut w: W) -> Result<()> {
    let m = g.size();
    let vals = plane(g);
    let peak = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    write!(w, "P5\n{m} {m}\n65535\n")?;
    let mut bytes = Vec::with_capacity(2 * vals.len());
    for v in vals {
        let u = if peak > 0.0 { (v + peak) / (2.0 * peak) } else { 0.5 };
        let level = (u * 65535.0).round().clamp(0.0, 65535.0) as u16;
        bytes.extend_from_slice(&level.to_be_bytes());
    }
    w.write_all(&bytes)?;
    Ok(())
}

/// A decoded 16-bit PGM image.
#[derive(Debug, Clone, PartialEq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub pixels: Vec<u16>,
}

/// Reads a binary 16-bit PGM as written by [`write_pgm`].
pub fn read_pgm<R: Read>(mut r: R) -> Result<Pgm> {
    let mut data = Vec::new();
    r.read_to_end(&mut data)?;
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < data.len() && data[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < data.len() && data[pos] == b'#' {
            while pos < data.len() && data[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < data.len() && !data[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated PGM header".into()));
        }
        fields.push(String::from_utf8_lossy(&data[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "P5" {
        return Err(Error::Format(format!("expected P5 magic, found {}", fields[0])));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| Error::Format(format!("bad PGM header value {s}")));
    let (width, height, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if !(256..=65535).contains(&maxval) {
        return Err(Error::Format(format!("expected a 16-bit PGM, maxval {maxval}")));
    }
    let body = data.get(pos..).unwrap_or(&[]);
    if body.len() != 2 * width * height {
        return Err(Error::Format(format!("PGM body has {} bytes, expected {}", body.len(), 2 * width * height)));
    }
    let pixels = body.chunks_exact(2).map(|b| u16::from_be_bytes([b[0], b[1]])).collect();
    Ok(Pgm { width, height, maxval: maxval as u16, pixels })
}

/// Grid snapshot as a matrix: the header row lists the `x` coordinates,
/// each following row starts with its `y` coordinate.
pub fn write_grid_csv<W: Write>(g: &GridField, w: W) -> Result<()> {
    let m = g.size();
    let vals = plane(g);
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["y\\x".to_string()];
    header.extend((0..m).map(|i| format!("{}", i as f64 / m as f64)));
    out.write_record(&header)?;
    for j in 0..m {
        let mut row = vec![format!("{}", j as f64 / m as f64)];
        row.extend(vals[j * m..(j + 1) * m].iter().map(|v| format!("{v:e}")));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// `k1,k2,log10_power` over the whole `(k1, k2)` square of the normalized
/// field `f/‖f‖` (the `k3 = 0` plane in 3D). Empty modes give `-inf`.
pub fn write_heatmap_csv<W: Write>(f: &SpectralField, w: W) -> Result<()> {
    let total = f.sobolev_norm_sq(0.0);
    if total <= 0.0 {
        return Err(Error::InsufficientData("spectrum of the zero field".into()));
    }
    let n = f.cutoff() as i64;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["k1", "k2", "log10_power"])?;
    for k2 in -n..=n {
        for k1 in -n..=n {
            let k = crate::ModeIndex([k1, k2, 0]);
            let p = f.get(k).norm_sqr() / total;
            out.write_record(&[k1.to_string(), k2.to_string(), format!("{}", p.log10())])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// `radius,power` for every integer radius of a shell spectrum.
pub fn write_shell_csv<W: Write>(profile: &SpectrumProfile, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["radius", "power"])?;
    for (r, p) in profile.power.iter().enumerate() {
        out.write_record(&[r.to_string(), format!("{p:e}")])?;
    }
    out.flush()?;
    Ok(())
}

/// `t,x,y[,z],log_inv_jac_norm`.
pub fn write_trajectory_csv<W: Write>(dim: Dimension, records: &[TrajectoryRecord], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["t", "x", "y"];
    if dim == Dimension::Three {
        header.push("z");
    }
    header.push("log_inv_jac_norm");
    out.write_record(&header)?;
    for r in records {
        if r.position.len() != dim.get() {
            return Err(Error::InvalidArgument("trajectory record has the wrong dimension".into()));
        }
        let mut row = vec![format!("{}", r.t)];
        row.extend(r.position.iter().map(|v| format!("{v}")));
        row.push(format!("{}", r.log_inv_jac_norm));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Pretty-printed JSON followed by a newline.
pub fn write_json<W: Write, T: Serialize>(value: &T, mut w: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::power_spectrum;
    use crate::initial::InitialCondition;
    use crate::spectral::{to_physical, Aliasing, ModeIndex};
    use num_complex::Complex64;
    use std::f64::consts::PI;

    #[test]
    fn ndjson_round_trip() {
        #[derive(Serialize, serde::Deserialize, Debug, PartialEq)]
        struct Row {
            t: f64,
            v: Option<f64>,
        }
        let mut w = NdjsonWriter::new(Vec::new());
        w.write(&Row { t: 0.0, v: Some(1.5) }).unwrap();
        w.write(&Row { t: 0.5, v: None }).unwrap();
        assert_eq!(w.lines(), 2);
        let bytes = w.into_inner().unwrap();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert_eq!(text.lines().count(), 2);
        let back: Vec<Row> = read_ndjson(&bytes[..]).unwrap();
        assert_eq!(back, vec![Row { t: 0.0, v: Some(1.5) }, Row { t: 0.5, v: None }]);
    }

    #[test]
    fn pgm_layout_and_mapping() {
        let g = GridField::from_fn(Dimension::Two, 8, |x| (2.0 * PI * x[0]).cos()).unwrap();
        let mut buf = Vec::new();
        write_pgm(&g, &mut buf).unwrap();
        assert!(buf.starts_with(b"P5\n8 8\n65535\n"));
        let img = read_pgm(&buf[..]).unwrap();
        assert_eq!((img.width, img.height, img.maxval), (8, 8, 65535));
        // x = 0 is the maximum, x = 1/2 the minimum, in every row
        for row in img.pixels.chunks(8) {
            assert_eq!(row[0], 65535);
            assert_eq!(row[4], 0);
            assert_eq!(row[2], 32768);
        }
        let zero = GridField::from_fn(Dimension::Two, 4, |_| 0.0).unwrap();
        let mut buf = Vec::new();
        write_pgm(&zero, &mut buf).unwrap();
        assert!(read_pgm(&buf[..]).unwrap().pixels.iter().all(|&p| p == 32768));
        assert!(read_pgm(&b"P2\n1 1\n255\n"[..]).is_err());
    }

    #[test]
    fn pgm_rows_follow_y() {
        let g = GridField::from_fn(Dimension::Two, 6, |x| x[1] - 0.5).unwrap();
        let mut buf = Vec::new();
        write_pgm(&g, &mut buf).unwrap();
        let img = read_pgm(&buf[..]).unwrap();
        for j in 0..6 {
            let row = &img.pixels[j * 6..(j + 1) * 6];
            assert!(row.iter().all(|&p| p == row[0]));
        }
        assert!(img.pixels[0] < img.pixels[30]);
    }

    #[test]
    fn grid_csv_has_coordinate_headers() {
        let g = GridField::from_fn(Dimension::Two, 4, |x| x[0] + 10.0 * x[1]).unwrap();
        let mut buf = Vec::new();
        write_grid_csv(&g, &mut buf).unwrap();
        let mut r = csv::Reader::from_reader(&buf[..]);
        let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
        assert_eq!(header, vec!["y\\x", "0", "0.25", "0.5", "0.75"]);
        let rows: Vec<Vec<f64>> =
            r.records().map(|rec| rec.unwrap().iter().map(|v| v.parse().unwrap()).collect()).collect();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[2][0], 0.5);
        assert!((rows[2][2] - (0.25 + 5.0)).abs() < 1e-12);
    }

    #[test]
    fn heatmap_and_shell_csv() {
        let f = SpectralField::new(
            Dimension::Two,
            3,
            [(ModeIndex::new2(1, 0), Complex64::new(1.0, 0.0)), (ModeIndex::new2(2, 1), Complex64::new(0.0, 1.0))],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_heatmap_csv(&f, &mut buf).unwrap();
        let mut r = csv::Reader::from_reader(&buf[..]);
        assert_eq!(r.headers().unwrap(), vec!["k1", "k2", "log10_power"]);
        let rows: Vec<(i64, i64, f64)> = r.deserialize().map(|x| x.unwrap()).collect();
        assert_eq!(rows.len(), 49);
        let get = |a, b| rows.iter().find(|r| r.0 == a && r.1 == b).unwrap().2;
        assert!((get(1, 0) - 0.25f64.log10()).abs() < 1e-12);
        assert!((get(-2, -1) - 0.25f64.log10()).abs() < 1e-12);
        assert_eq!(get(0, 0), f64::NEG_INFINITY);

        let mut buf = Vec::new();
        write_shell_csv(&power_spectrum(&f).normalized(), &mut buf).unwrap();
        let mut r = csv::Reader::from_reader(&buf[..]);
        assert_eq!(r.headers().unwrap(), vec!["radius", "power"]);
        let rows: Vec<(usize, f64)> = r.deserialize().map(|x| x.unwrap()).collect();
        let total: f64 = rows.iter().map(|r| r.1).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!((rows[1].1 - 0.5).abs() < 1e-12);
        assert!((rows[2].1 - 0.5).abs() < 1e-12);
        assert!(write_heatmap_csv(&SpectralField::zeros(Dimension::Two, 2).unwrap(), Vec::new()).is_err());
    }

    #[test]
    fn trajectory_csv_columns() {
        let recs = crate::lagrangian::trajectory(Dimension::Three, &[0.1, 0.2, 0.3], 0.1, 0.01, 1, 5).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(Dimension::Three, &recs, &mut buf).unwrap();
        let mut r = csv::Reader::from_reader(&buf[..]);
        assert_eq!(r.headers().unwrap(), vec!["t", "x", "y", "z", "log_inv_jac_norm"]);
        assert_eq!(r.records().count(), recs.len());
        assert!(write_trajectory_csv(Dimension::Two, &recs, Vec::new()).is_err());
    }

    #[test]
    fn snapshot_formats_agree() {
        let f = InitialCondition::RandomShell { radius: 2, seed: 3 }.build(Dimension::Two, 4).unwrap();
        let g = to_physical(&f, 10, Aliasing::Forbid).unwrap();
        let mut pgm = Vec::new();
        write_pgm(&g, &mut pgm).unwrap();
        let img = read_pgm(&pgm[..]).unwrap();
        let peak = g.max_abs();
        for (p, v) in img.pixels.iter().zip(g.samples()) {
            let back = *p as f64 / 65535.0 * 2.0 * peak - peak;
            assert!((back - v).abs() <= peak / 65535.0 * 1.01);
        }
    }
}
