//! Binary PGM (P5) and PPM (P6) heatmaps of one `[n_lat][n_lon]` slice.
//! Row 0 is the northernmost latitude; the slice minimum maps to the first
//! palette entry and the maximum to the last.

/// Fixed five-stop palette, dark blue through yellow.
const STOPS: [[f64; 3]; 5] = [
    [68.0, 1.0, 84.0],
    [59.0, 82.0, 139.0],
    [33.0, 145.0, 140.0],
    [94.0, 201.0, 98.0],
    [253.0, 231.0, 37.0],
];

fn levels(slice: &[f64]) -> Vec<f64> {
    let (lo, hi) = slice
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let span = hi - lo;
    slice
        .iter()
        .map(|&v| if span > 0.0 { (v - lo) / span } else { 0.0 })
        .collect()
}

pub fn pgm(slice: &[f64], n_lat: usize, n_lon: usize) -> Vec<u8> {
    assert_eq!(slice.len(), n_lat * n_lon);
    let mut out = format!("P5\n{n_lon} {n_lat}\n255\n").into_bytes();
    out.extend(levels(slice).into_iter().map(|t| (t * 255.0).round() as u8));
    out
}

fn palette(t: f64) -> [u8; 3] {
    let x = t.clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let i = (x.floor() as usize).min(STOPS.len() - 2);
    let f = x - i as f64;
    let mut rgb = [0u8; 3];
    for (c, v) in rgb.iter_mut().enumerate() {
        *v = (STOPS[i][c] + f * (STOPS[i + 1][c] - STOPS[i][c])).round() as u8;
    }
    rgb
}

pub fn ppm(slice: &[f64], n_lat: usize, n_lon: usize) -> Vec<u8> {
    assert_eq!(slice.len(), n_lat * n_lon);
    let mut out = format!("P6\n{n_lon} {n_lat}\n255\n").into_bytes();
    for t in levels(slice) {
        out.extend_from_slice(&palette(t));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_endpoints() {
        let slice = [300.0, 400.0, 500.0, 700.0, 350.0, 600.0];
        let img = pgm(&slice, 2, 3);
        let header = b"P5\n3 2\n255\n";
        assert_eq!(&img[..header.len()], header);
        let px = &img[header.len()..];
        assert_eq!(px.len(), 6);
        assert_eq!(px[0], 0);
        assert_eq!(px[3], 255);
    }

    #[test]
    fn constant_slice_is_uniform() {
        let img = ppm(&[450.0; 12], 3, 4);
        let px = &img[b"P6\n4 3\n255\n".len()..];
        assert_eq!(px.len(), 36);
        assert!(px.chunks(3).all(|c| c == [68, 1, 84]));
    }

    #[test]
    fn palette_ends() {
        assert_eq!(palette(0.0), [68, 1, 84]);
        assert_eq!(palette(1.0), [253, 231, 37]);
    }
}
