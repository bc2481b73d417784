//! Placement of a layer's differential weight pairs on tiled crossbars.
//!
//! A layer's augmented matrix (fan_in + 1 rows including the bias line,
//! fan_out columns) occupies a device grid of (fan_in + 1) × 2·fan_out, the
//! two polarities of a weight sitting in adjacent columns. The grid is cut
//! into tiles; each tile is programmed row-major, so the last device of a
//! tile has `n_d = 0`.

use ndarray::Array2;

use crate::error::{Error, Result};

pub const DEFAULT_TILE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarity {
    Plus,
    Minus,
}

impl Polarity {
    fn column_offset(self) -> usize {
        match self {
            Polarity::Plus => 0,
            Polarity::Minus => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TileLayout {
    pub tile_rows: usize,
    pub tile_cols: usize,
    nd_plus: Array2<u32>,
    nd_minus: Array2<u32>,
}

impl TileLayout {
    /// Layout for a weight matrix of `rows × cols` (already including the bias row).
    pub fn new(rows: usize, cols: usize, tile_rows: usize, tile_cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 || tile_rows == 0 || tile_cols == 0 {
            return Err(Error::InvalidInput(format!(
                "layout needs non-empty shapes, got weights {rows}x{cols}, tile {tile_rows}x{tile_cols}"
            )));
        }
        let grid = (rows, 2 * cols);
        let nd = |r: usize, c: usize, p: Polarity| {
            let gc = 2 * c + p.column_offset();
            device_nd(grid, (tile_rows, tile_cols), (r, gc))
        };
        Ok(Self {
            tile_rows,
            tile_cols,
            nd_plus: Array2::from_shape_fn((rows, cols), |(r, c)| nd(r, c, Polarity::Plus)),
            nd_minus: Array2::from_shape_fn((rows, cols), |(r, c)| nd(r, c, Polarity::Minus)),
        })
    }

    /// Layout for a dense layer with the given fan-in and fan-out.
    pub fn for_layer(fan_in: usize, fan_out: usize, tile_rows: usize, tile_cols: usize) -> Result<Self> {
        Self::new(fan_in + 1, fan_out, tile_rows, tile_cols)
    }

    /// Shape of the weight matrix this layout places.
    pub fn weight_shape(&self) -> (usize, usize) {
        self.nd_plus.dim()
    }

    pub fn grid_shape(&self) -> (usize, usize) {
        let (r, c) = self.weight_shape();
        (r, 2 * c)
    }

    pub fn device_position(&self, row: usize, col: usize, polarity: Polarity) -> (usize, usize) {
        (row, 2 * col + polarity.column_offset())
    }

    pub fn tile_of(&self, device: (usize, usize)) -> (usize, usize) {
        (device.0 / self.tile_rows, device.1 / self.tile_cols)
    }

    pub fn n_d(&self, row: usize, col: usize, polarity: Polarity) -> u32 {
        self.nd_matrix(polarity)[[row, col]]
    }

    pub fn nd_matrix(&self, polarity: Polarity) -> &Array2<u32> {
        match polarity {
            Polarity::Plus => &self.nd_plus,
            Polarity::Minus => &self.nd_minus,
        }
    }
}

fn device_nd(grid: (usize, usize), tile: (usize, usize), device: (usize, usize)) -> u32 {
    let (tr, tc) = (device.0 / tile.0, device.1 / tile.1);
    let (r0, c0) = (tr * tile.0, tc * tile.1);
    let height = tile.0.min(grid.0 - r0);
    let width = tile.1.min(grid.1 - c0);
    let local = (device.0 - r0) * width + (device.1 - c0);
    (height * width - 1 - local) as u32
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    /// n_d values per tile, collected from the layout.
    fn per_tile(layout: &TileLayout) -> BTreeMap<(usize, usize), Vec<u32>> {
        let (rows, cols) = layout.weight_shape();
        let mut tiles: BTreeMap<(usize, usize), Vec<u32>> = BTreeMap::new();
        for r in 0..rows {
            for c in 0..cols {
                for p in [Polarity::Plus, Polarity::Minus] {
                    let dev = layout.device_position(r, c, p);
                    tiles.entry(layout.tile_of(dev)).or_default().push(layout.n_d(r, c, p));
                }
            }
        }
        tiles
    }

    #[test]
    fn single_tile_is_row_major_countdown() {
        // 2 weights in 1 row -> 4 devices: (+0, -0, +1, -1)
        let l = TileLayout::new(1, 2, 8, 8).unwrap();
        assert_eq!(l.n_d(0, 0, Polarity::Plus), 3);
        assert_eq!(l.n_d(0, 0, Polarity::Minus), 2);
        assert_eq!(l.n_d(0, 1, Polarity::Plus), 1);
        assert_eq!(l.n_d(0, 1, Polarity::Minus), 0);
    }

    #[test]
    fn hidden_layer_spans_two_tiles() {
        // 2 inputs + bias, 8 outputs -> 3 x 16 grid -> two 3x8 tiles
        let l = TileLayout::for_layer(2, 8, 8, 8).unwrap();
        assert_eq!(l.grid_shape(), (3, 16));
        let tiles = per_tile(&l);
        assert_eq!(tiles.len(), 2);
        // bottom-right device of each tile is programmed last
        assert_eq!(l.n_d(2, 3, Polarity::Minus), 0);
        assert_eq!(l.n_d(2, 7, Polarity::Minus), 0);
        assert_eq!(l.n_d(0, 0, Polarity::Plus), 23);
    }

    #[test]
    fn nd_is_a_permutation_within_every_tile() {
        for (fan_in, fan_out) in [(2, 8), (8, 1), (13, 5), (1, 1), (20, 20)] {
            for tile in [(8, 8), (4, 6), (1, 1), (3, 5)] {
                let l = TileLayout::for_layer(fan_in, fan_out, tile.0, tile.1).unwrap();
                for (_, mut nds) in per_tile(&l) {
                    nds.sort_unstable();
                    let expected: Vec<u32> = (0..nds.len() as u32).collect();
                    assert_eq!(nds, expected, "layer {fan_in}x{fan_out} tile {tile:?}");
                }
            }
        }
    }

    #[test]
    fn rejects_empty_shapes() {
        assert!(TileLayout::new(0, 3, 8, 8).is_err());
        assert!(TileLayout::new(3, 3, 0, 8).is_err());
    }
}
