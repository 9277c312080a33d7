use super::image::ImageBuffer;
use super::resize::bicubic_downsample;
use crate::error::{Error, Result};

pub const MIN_TILE: usize = 8;

/// Row-major tiles of a reflect-padded image, with enough metadata to undo
/// the padding.
#[derive(Clone, Debug, PartialEq)]
pub struct TileGrid {
    pub tiles: Vec<ImageBuffer>,
    pub rows: usize,
    pub cols: usize,
    pub tile_size: usize,
    /// `(height, width)` before padding.
    pub original_size: (usize, usize),
    /// `(bottom, right)` reflect padding.
    pub pad: (usize, usize),
}

/// Mirror index without repeating the edge sample; periodic for pads longer
/// than the image.
fn reflect(i: usize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let m = i % period;
    if m < n {
        m
    } else {
        period - m
    }
}

/// Reflect-pads right and bottom up to a multiple of `tile_size`, then cuts
/// row-major tiles.
pub fn tile(image: &ImageBuffer, tile_size: usize) -> Result<TileGrid> {
    if tile_size < MIN_TILE {
        return Err(Error::invalid(
            "tile",
            format!("tile size {tile_size} below {MIN_TILE}"),
        ));
    }
    let (h, w, c) = (image.height(), image.width(), image.channels());
    let rows = h.div_ceil(tile_size);
    let cols = w.div_ceil(tile_size);
    let pad = (rows * tile_size - h, cols * tile_size - w);
    let src = image.data();
    let mut tiles = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for col in 0..cols {
            let mut data = Vec::with_capacity(tile_size * tile_size * c);
            for y in r * tile_size..(r + 1) * tile_size {
                let sy = reflect(y, h);
                let x0 = col * tile_size;
                if x0 + tile_size <= w {
                    let s = (sy * w + x0) * c;
                    data.extend_from_slice(&src[s..s + tile_size * c]);
                } else {
                    for x in x0..x0 + tile_size {
                        let s = (sy * w + reflect(x, w)) * c;
                        data.extend_from_slice(&src[s..s + c]);
                    }
                }
            }
            tiles.push(ImageBuffer::new(tile_size, tile_size, image.roles().to_vec(), data)?);
        }
    }
    Ok(TileGrid {
        tiles,
        rows,
        cols,
        tile_size,
        original_size: (h, w),
        pad,
    })
}

impl TileGrid {
    /// Replaces every tile with `f(tile)`. All outputs must be square and
    /// `scale` times the tile size; the layout metadata is scaled to match.
    pub fn map_scaled<F>(&self, scale: usize, mut f: F) -> Result<TileGrid>
    where
        F: FnMut(&ImageBuffer) -> Result<ImageBuffer>,
    {
        let tiles = self.tiles.iter().map(&mut f).collect::<Result<Vec<_>>>()?;
        Ok(TileGrid {
            tiles,
            rows: self.rows,
            cols: self.cols,
            tile_size: self.tile_size * scale,
            original_size: (self.original_size.0 * scale, self.original_size.1 * scale),
            pad: (self.pad.0 * scale, self.pad.1 * scale),
        })
    }

    pub fn len(&self) -> usize {
        self.tiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tiles.is_empty()
    }
}

/// Reassembles tiles row-major and crops the recorded padding.
pub fn stitch(grid: &TileGrid) -> Result<ImageBuffer> {
    let t = grid.tile_size;
    if grid.tiles.len() != grid.rows * grid.cols || grid.tiles.is_empty() {
        return Err(Error::invalid(
            "stitch",
            format!("{} tiles for a {}x{} grid", grid.tiles.len(), grid.rows, grid.cols),
        ));
    }
    let (h, w) = grid.original_size;
    if grid.rows * t != h + grid.pad.0 || grid.cols * t != w + grid.pad.1 || h == 0 || w == 0 {
        return Err(Error::invalid(
            "stitch",
            "grid extent does not match original size plus padding",
        ));
    }
    let c = grid.tiles[0].channels();
    for (i, tile) in grid.tiles.iter().enumerate() {
        if tile.height() != t || tile.width() != t || tile.channels() != c {
            return Err(Error::invalid(
                "stitch",
                format!(
                    "tile {i} is {}x{}x{}, expected {t}x{t}x{c}",
                    tile.width(),
                    tile.height(),
                    tile.channels()
                ),
            ));
        }
    }
    let mut out = vec![0.0f32; h * w * c];
    for y in 0..h {
        let (r, ty) = (y / t, y % t);
        for col in 0..grid.cols {
            let x0 = col * t;
            if x0 >= w {
                break;
            }
            let span = t.min(w - x0);
            let tile = grid.tiles[r * grid.cols + col].data();
            let s = ty * t * c;
            out[(y * w + x0) * c..(y * w + x0 + span) * c].copy_from_slice(&tile[s..s + span * c]);
        }
    }
    ImageBuffer::new(h, w, grid.tiles[0].roles().to_vec(), out)
}

/// Tiles `image` at `hr_tile` and bicubic-downsamples each tile by `scale`,
/// yielding `(lr, hr)` pairs in row-major order.
pub fn make_training_pair(
    image: &ImageBuffer,
    hr_tile: usize,
    scale: usize,
) -> Result<Vec<(ImageBuffer, ImageBuffer)>> {
    if scale == 0 || !hr_tile.is_multiple_of(scale) {
        return Err(Error::invalid(
            "make_training_pair",
            format!("tile {hr_tile} not divisible by scale {scale}"),
        ));
    }
    tile(image, hr_tile)?
        .tiles
        .into_iter()
        .map(|hr| Ok((bicubic_downsample(&hr, scale)?, hr)))
        .collect()
}
