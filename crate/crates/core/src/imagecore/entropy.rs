use super::GrayField;
use crate::error::{Error, Result};

/// Number of gray levels used when quantizing a field for entropy and Otsu.
pub const ENTROPY_LEVELS: usize = 256;

#[inline]
pub(crate) fn quantize_unit(v: f64, levels: usize) -> usize {
    let top = (levels - 1) as f64;
    (v.clamp(0.0, 1.0) * top).round() as usize
}

/// Shannon entropy (bits) of the 256-level histogram inside a `window x window`
/// neighbourhood centred on each pixel. Input values are expected in `[0,1]`;
/// borders replicate the nearest edge pixel.
pub fn local_entropy(gray: &GrayField, window: usize) -> Result<GrayField> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "entropy window must be odd and positive, got {window}"
        )));
    }
    let (w, h) = (gray.width, gray.height);
    if w == 0 || h == 0 {
        return Ok(gray.clone());
    }
    let levels: Vec<u8> = gray
        .data
        .iter()
        .map(|&v| quantize_unit(v, ENTROPY_LEVELS) as u8)
        .collect();
    let r = (window / 2) as isize;
    let n = window * window;
    // c * log2(c) for every count a window can hold
    let clogc: Vec<f64> = (0..=n)
        .map(|c| {
            if c == 0 {
                0.0
            } else {
                c as f64 * (c as f64).log2()
            }
        })
        .collect();
    let log_n = (n as f64).log2();
    let clamp_x = |x: isize| x.clamp(0, w as isize - 1) as usize;
    let clamp_y = |y: isize| y.clamp(0, h as isize - 1) as usize;

    let mut out = vec![0.0; w * h];
    let mut hist = [0usize; ENTROPY_LEVELS];
    for y in 0..h as isize {
        hist.fill(0);
        let mut acc = 0.0;
        let bump = |hist: &mut [usize; ENTROPY_LEVELS], acc: &mut f64, lvl: u8, add: bool| {
            let c = &mut hist[lvl as usize];
            *acc -= clogc[*c];
            if add {
                *c += 1;
            } else {
                *c -= 1;
            }
            *acc += clogc[*c];
        };
        for dy in -r..=r {
            let row = clamp_y(y + dy) * w;
            for dx in -r..=r {
                bump(&mut hist, &mut acc, levels[row + clamp_x(dx)], true);
            }
        }
        for x in 0..w as isize {
            if x > 0 {
                let leaving = clamp_x(x - 1 - r);
                let entering = clamp_x(x + r);
                for dy in -r..=r {
                    let row = clamp_y(y + dy) * w;
                    bump(&mut hist, &mut acc, levels[row + leaving], false);
                    bump(&mut hist, &mut acc, levels[row + entering], true);
                }
            }
            // H = log2(n) - (1/n) sum c log2 c
            let e = log_n - acc / n as f64;
            out[y as usize * w + x as usize] = if e < 1e-12 { 0.0 } else { e };
        }
    }
    GrayField::new(w, h, out)
}
