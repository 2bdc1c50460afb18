//! Figure data: space-time maps of ρ and E, the electric energy curve and
//! density cross sections, each as CSV plus a PNG.

use std::io::Write;

use image::{ImageFormat, Rgb, RgbImage};

use super::manifest::Outputs;
use super::CliError;
use crate::refsolver::{electric_energy, write_field_csv, SolutionField};

const VIRIDIS: [[f64; 3]; 5] = [
    [68.0, 1.0, 84.0],
    [59.0, 82.0, 139.0],
    [33.0, 145.0, 140.0],
    [94.0, 201.0, 98.0],
    [253.0, 231.0, 37.0],
];
const DIVERGING: [[f64; 3]; 3] = [[59.0, 76.0, 192.0], [240.0, 240.0, 240.0], [180.0, 4.0, 38.0]];

fn lerp_map(map: &[[f64; 3]], s: f64) -> Rgb<u8> {
    let s = s.clamp(0.0, 1.0) * (map.len() - 1) as f64;
    let i = (s.floor() as usize).min(map.len() - 2);
    let a = s - i as f64;
    let c = |k: usize| ((1.0 - a) * map[i][k] + a * map[i + 1][k]).round() as u8;
    Rgb([c(0), c(1), c(2)])
}

/// Space-time map with `x` to the right and `t` upwards.
fn heatmap(values: &[f64], nt: usize, nx: usize, diverging: bool) -> RgbImage {
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let (lo, hi) = if diverging {
        let m = lo.abs().max(hi.abs()).max(1e-300);
        (-m, m)
    } else if hi > lo {
        (lo, hi)
    } else {
        (lo - 1.0, lo + 1.0)
    };
    let scale = (512 / nx.max(1)).max(1) as u32;
    let tscale = (384 / nt.max(1)).max(1) as u32;
    let (w, h) = (nx as u32 * scale, nt as u32 * tscale);
    RgbImage::from_fn(w, h, |px, py| {
        let ix = (px / scale) as usize;
        let it = nt - 1 - (py / tscale) as usize;
        let s = (values[it * nx + ix] - lo) / (hi - lo);
        lerp_map(if diverging { &DIVERGING } else { &VIRIDIS }, s)
    })
}

const W: u32 = 480;
const H: u32 = 320;
const MARGIN: u32 = 24;

fn draw_line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), color: Rgb<u8>) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
            img.put_pixel(x as u32, y as u32, color);
        }
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// Line plot of several series over a shared abscissa, axes box only.
fn line_plot(x: &[f64], series: &[Vec<f64>]) -> RgbImage {
    let mut img = RgbImage::from_pixel(W, H, Rgb([255, 255, 255]));
    let black = Rgb([0, 0, 0]);
    let (l, r, t, b) = (MARGIN as i64, (W - MARGIN) as i64, MARGIN as i64, (H - MARGIN) as i64);
    for (p, q) in [((l, t), (r, t)), ((r, t), (r, b)), ((r, b), (l, b)), ((l, b), (l, t))] {
        draw_line(&mut img, p, q, black);
    }
    let finite = series.iter().flatten().filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 1.0, lo + 1.0) };
    let (x0, x1) = (x.first().copied().unwrap_or(0.0), x.last().copied().unwrap_or(1.0));
    let span = if x1 > x0 { x1 - x0 } else { 1.0 };
    let px = |v: f64| l + ((v - x0) / span * (r - l) as f64).round() as i64;
    let py = |v: f64| b - ((v - lo) / (hi - lo) * (b - t) as f64).round() as i64;
    for (k, s) in series.iter().enumerate() {
        let color = lerp_map(&VIRIDIS, k as f64 / series.len().max(2).saturating_sub(1) as f64 * 0.8);
        for i in 1..s.len().min(x.len()) {
            if s[i - 1].is_finite() && s[i].is_finite() {
                draw_line(&mut img, (px(x[i - 1]), py(s[i - 1])), (px(x[i]), py(s[i])), color);
            }
        }
    }
    img
}

fn save_png(out: &mut Outputs, name: &str, img: &RgbImage) -> Result<(), CliError> {
    let mut buf = std::io::Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png).map_err(|e| CliError::Usage(format!("{name}: {e}")))?;
    out.write(name, buf.get_ref())
}

/// Times at which density cross sections are drawn: start, middle, end.
fn section_rows(nt: usize) -> Vec<usize> {
    let mut rows = vec![0, nt / 2, nt - 1];
    rows.dedup();
    rows
}

/// Write `field.csv`, `energy.csv`, `cross_sections.csv` and the PNGs
/// `rho.png`, `efield.png`, `energy.png`, `cross_sections.png`.
pub(crate) fn export_figures(field: &SolutionField, out: &mut Outputs) -> Result<(), CliError> {
    field.check()?;
    let (nt, nx) = (field.nt(), field.nx());
    if nt == 0 || nx < 2 {
        return Err(CliError::Usage("field needs at least one time and two nodes".into()));
    }
    write_field_csv(field, out.create("field.csv")?)?;

    let dx = field.x[1] - field.x[0];
    let energy = electric_energy(&field.e, nx, dx);
    let mut w = out.create("energy.csv")?;
    writeln!(w, "t,energy")?;
    for (t, e) in field.times.iter().zip(&energy) {
        writeln!(w, "{t:e},{e:e}")?;
    }
    w.flush()?;

    let rows = section_rows(nt);
    let mut w = out.create("cross_sections.csv")?;
    let header: Vec<String> = rows.iter().map(|&i| format!("rho_t{}", field.times[i])).collect();
    writeln!(w, "x,{}", header.join(","))?;
    for ix in 0..nx {
        let vals: Vec<String> = rows.iter().map(|&i| format!("{:e}", field.rho[i * nx + ix])).collect();
        writeln!(w, "{:e},{}", field.x[ix], vals.join(","))?;
    }
    w.flush()?;

    save_png(out, "rho.png", &heatmap(&field.rho, nt, nx, false))?;
    save_png(out, "efield.png", &heatmap(&field.e, nt, nx, true))?;
    let log_energy: Vec<f64> = energy.iter().map(|e| e.log10()).collect();
    save_png(out, "energy.png", &line_plot(&field.times, &[log_energy]))?;
    let sections: Vec<Vec<f64>> = rows.iter().map(|&i| field.rho_at(i).to_vec()).collect();
    save_png(out, "cross_sections.png", &line_plot(&field.x, &sections))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn colormap_ends() {
        assert_eq!(lerp_map(&VIRIDIS, 0.0), Rgb([68, 1, 84]));
        assert_eq!(lerp_map(&VIRIDIS, 1.0), Rgb([253, 231, 37]));
        assert_eq!(lerp_map(&DIVERGING, 0.5), Rgb([240, 240, 240]));
    }

    #[test]
    fn heatmap_orientation() {
        // larger value at the last time, first node: top-left pixel
        let img = heatmap(&[0.0, 0.0, 1.0, 0.0], 2, 2, false);
        assert_eq!(*img.get_pixel(0, 0), Rgb([253, 231, 37]));
        assert_eq!(*img.get_pixel(img.width() - 1, img.height() - 1), Rgb([68, 1, 84]));
    }

    #[test]
    fn section_rows_dedup() {
        assert_eq!(section_rows(1), vec![0]);
        assert_eq!(section_rows(5), vec![0, 2, 4]);
    }
}
