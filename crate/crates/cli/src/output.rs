use std::io::Write;

use anyhow::Result;
use serde::Serialize;
use volest::render::Image;
use volest::sampler::PackedSamples;

use crate::harness::UpdateRow;

/// Binary P6 PPM, 8 bits per channel, values clamped to [0, 1].
pub fn write_ppm(image: &Image, mut out: impl Write) -> Result<()> {
    write!(out, "P6\n{} {}\n255\n", image.width(), image.height())?;
    let bytes: Vec<u8> = image
        .pixels()
        .iter()
        .flat_map(|p| p.map(|c| (c.clamp(0.0, 1.0) * 255.0).round() as u8))
        .collect();
    out.write_all(&bytes)?;
    out.flush()?;
    Ok(())
}

pub(crate) fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(out)
}

/// `ray_id,t0,t1`, one row per interval.
pub fn write_samples_csv(samples: &PackedSamples, out: impl Write) -> Result<()> {
    #[derive(Serialize)]
    struct Row {
        ray_id: usize,
        t0: f64,
        t1: f64,
    }
    let mut w = csv_writer(out);
    for s in samples.intervals() {
        w.serialize(Row {
            ray_id: s.ray_id,
            t0: s.t0,
            t1: s.t1,
        })?;
    }
    if samples.is_empty() {
        w.write_record(["ray_id", "t0", "t1"])?;
    }
    w.flush()?;
    Ok(())
}

/// `k,max_cell_error,occupied_fraction`.
pub fn write_updates_csv(rows: &[UpdateRow], out: impl Write) -> Result<()> {
    let mut w = csv_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record(["k", "max_cell_error", "occupied_fraction"])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_header_and_bytes() {
        let img = Image::new(2, 1, vec![[0.0, 0.5, 1.0], [2.0, -1.0, 0.25]]).unwrap();
        let mut buf = Vec::new();
        write_ppm(&img, &mut buf).unwrap();
        let header = b"P6\n2 1\n255\n";
        assert_eq!(&buf[..header.len()], header);
        assert_eq!(&buf[header.len()..], &[0, 128, 255, 255, 0, 64]);
    }

    #[test]
    fn samples_csv_has_header_and_crlf() {
        let p = PackedSamples::pack(vec![vec![(0.5, 1.0)], vec![], vec![(0.0, 0.25)]]);
        let mut buf = Vec::new();
        write_samples_csv(&p, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "ray_id,t0,t1\r\n0,0.5,1.0\r\n2,0.0,0.25\r\n"
        );
    }

    #[test]
    fn update_csv_header_comes_from_field_names() {
        let rows = [UpdateRow {
            k: 0,
            max_cell_error: 3.0,
            occupied_fraction: 0.0,
        }];
        let mut buf = Vec::new();
        write_updates_csv(&rows, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "k,max_cell_error,occupied_fraction\r\n0,3.0,0.0\r\n"
        );
    }
}
