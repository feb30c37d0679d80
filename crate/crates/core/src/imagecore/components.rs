use serde::{Deserialize, Serialize};

use super::BinaryMask;
use crate::error::{Error, Result};

/// Pixel adjacency used for component labelling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

impl Connectivity {
    pub(crate) fn offsets(self) -> &'static [(isize, isize)] {
        const FOUR: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];
        const EIGHT: [(isize, isize); 8] = [
            (-1, -1),
            (0, -1),
            (1, -1),
            (-1, 0),
            (1, 0),
            (-1, 1),
            (0, 1),
            (1, 1),
        ];
        match self {
            Connectivity::Four => &FOUR,
            Connectivity::Eight => &EIGHT,
        }
    }
}

/// Component labelling of a mask. Component ids are assigned in raster order
/// of each component's first pixel.
#[derive(Debug, Clone)]
pub struct Components {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<Option<u32>>,
    pub sizes: Vec<usize>,
}

impl Components {
    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    /// Pixel indices of every component, in raster order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = self.sizes.iter().map(|&n| Vec::with_capacity(n)).collect();
        for (i, l) in self.labels.iter().enumerate() {
            if let Some(l) = l {
                out[*l as usize].push(i);
            }
        }
        out
    }
}

pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> Components {
    let (w, h) = (mask.width, mask.height);
    let mut labels = vec![None; w * h];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !mask.data[start] || labels[start].is_some() {
            continue;
        }
        let id = sizes.len() as u32;
        let mut size = 0usize;
        labels[start] = Some(id);
        stack.push(start);
        while let Some(i) = stack.pop() {
            size += 1;
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            for &(dx, dy) in connectivity.offsets() {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if mask.data[j] && labels[j].is_none() {
                    labels[j] = Some(id);
                    stack.push(j);
                }
            }
        }
        sizes.push(size);
    }
    Components {
        width: w,
        height: h,
        labels,
        sizes,
    }
}

/// Clears every component whose size falls outside `[min_px, max_px]`
/// (both bounds inclusive).
pub fn filter_components_by_size(
    mask: &BinaryMask,
    min_px: usize,
    max_px: usize,
    connectivity: Connectivity,
) -> Result<BinaryMask> {
    if min_px > max_px {
        return Err(Error::invalid(format!(
            "size bounds reversed: min {min_px} > max {max_px}"
        )));
    }
    let comps = connected_components(mask, connectivity);
    let keep: Vec<bool> = comps
        .sizes
        .iter()
        .map(|&n| n >= min_px && n <= max_px)
        .collect();
    let data = comps
        .labels
        .iter()
        .map(|l| l.is_some_and(|l| keep[l as usize]))
        .collect();
    Ok(BinaryMask {
        width: mask.width,
        height: mask.height,
        data,
    })
}
