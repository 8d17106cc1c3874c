//! File formats: SKF kernel fields, PGM images and CSV matrices.
//!
//! SKF layout (little-endian): b"SKF1", u32 domain (0 spatial, 1 frequency),
//! i32 P, Q, R, i32 oversampling, f64 length_x, length_y, then one (re, im)
//! pair of f64 per voxel with θ slowest, then x, then y.

use std::io::{BufRead, Read, Write};

use num_complex::Complex64;

use crate::error::{Result, Se2Error};
use crate::field::{Domain, Se2Field};
use crate::grid::GridSpec;

const MAGIC: &[u8; 4] = b"SKF1";

/// Real-valued raster, row-major with `rows` lines of `cols` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Se2Error::Format(format!("{} samples for a {rows}×{cols} image", data.len())));
        }
        Ok(Image { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Image { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.data[row * self.cols + col] = v;
    }
}

pub fn write_skf<W: Write>(field: &Se2Field, mut w: W) -> Result<()> {
    let g = &field.grid;
    let mut buf = Vec::with_capacity(40 + 16 * field.data.len());
    buf.extend_from_slice(MAGIC);
    let flag: u32 = match field.domain {
        Domain::Spatial => 0,
        Domain::Frequency => 1,
    };
    buf.extend_from_slice(&flag.to_le_bytes());
    for v in [g.p, g.q, g.r, g.oversample] {
        let v = i32::try_from(v).map_err(|_| Se2Error::Format("grid size exceeds i32".into()))?;
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&g.length_x.to_le_bytes());
    buf.extend_from_slice(&g.length_y.to_le_bytes());
    for v in &field.data {
        buf.extend_from_slice(&v.re.to_le_bytes());
        buf.extend_from_slice(&v.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_skf<R: Read>(mut r: R) -> Result<Se2Field> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        let s = bytes.get(pos..pos + n).ok_or_else(|| Se2Error::Format("truncated SKF file".into()))?;
        pos += n;
        Ok(s)
    };
    if take(4)? != MAGIC {
        return Err(Se2Error::Format("not an SKF1 file".into()));
    }
    let domain = match u32::from_le_bytes(take(4)?.try_into().unwrap()) {
        0 => Domain::Spatial,
        1 => Domain::Frequency,
        d => return Err(Se2Error::Format(format!("unknown domain flag {d}"))),
    };
    let mut dims = [0usize; 4];
    for d in dims.iter_mut() {
        let v = i32::from_le_bytes(take(4)?.try_into().unwrap());
        *d = usize::try_from(v).map_err(|_| Se2Error::Format(format!("negative size {v}")))?;
    }
    let lx = f64::from_le_bytes(take(8)?.try_into().unwrap());
    let ly = f64::from_le_bytes(take(8)?.try_into().unwrap());
    let mut grid = GridSpec::new(dims[0], dims[1], dims[2])?.with_oversample(dims[3])?;
    if !(lx > 0.0 && ly > 0.0) {
        return Err(Se2Error::Format("non-positive frame length".into()));
    }
    grid.length_x = lx;
    grid.length_y = ly;
    let mut data = Vec::with_capacity(grid.len());
    for _ in 0..grid.len() {
        let re = f64::from_le_bytes(take(8)?.try_into().unwrap());
        let im = f64::from_le_bytes(take(8)?.try_into().unwrap());
        data.push(Complex64::new(re, im));
    }
    if pos != bytes.len() {
        return Err(Se2Error::Format("trailing bytes after SKF data".into()));
    }
    Se2Field::from_data(grid, domain, data)
}

/// Binary PGM (P5). Values are scaled linearly from [min, max] onto the
/// full range; `sixteen_bit` selects maxval 65535.
pub fn write_pgm<W: Write>(img: &Image, sixteen_bit: bool, mut w: W) -> Result<()> {
    let lo = img.data.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = img.data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let maxval: u32 = if sixteen_bit { 65535 } else { 255 };
    write!(w, "P5\n{} {}\n{}\n", img.cols, img.rows, maxval)?;
    let mut buf = Vec::with_capacity(img.data.len() * 2);
    for v in &img.data {
        let q = (((v - lo) / span) * maxval as f64).round().clamp(0.0, maxval as f64) as u32;
        if sixteen_bit {
            buf.extend_from_slice(&(q as u16).to_be_bytes());
        } else {
            buf.push(q as u8);
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Binary PGM (P5), 8 or 16 bit; samples are returned in [0, 1].
pub fn read_pgm<R: Read>(mut r: R) -> Result<Image> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut pos = 0usize;
    let mut tokens = Vec::new();
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Se2Error::Format("truncated PGM header".into()));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if tokens[0] != "P5" {
        return Err(Se2Error::Format(format!("unsupported PGM magic '{}'", tokens[0])));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| Se2Error::Format(format!("bad PGM header field '{s}'")));
    let (cols, rows, maxval) = (num(&tokens[1])?, num(&tokens[2])?, num(&tokens[3])?);
    if maxval == 0 || maxval > 65535 {
        return Err(Se2Error::Format(format!("bad PGM maxval {maxval}")));
    }
    let wide = maxval > 255;
    let need = rows * cols * if wide { 2 } else { 1 };
    let body = bytes.get(pos..pos + need).ok_or_else(|| Se2Error::Format("truncated PGM data".into()))?;
    let data = if wide {
        body.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / maxval as f64).collect()
    } else {
        body.iter().map(|&b| b as f64 / maxval as f64).collect()
    };
    Image::new(rows, cols, data)
}

/// Plain comma-separated matrix, one image row per line.
pub fn write_csv_matrix<W: Write>(img: &Image, w: W) -> Result<()> {
    let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    for row in img.data.chunks(img.cols) {
        wr.write_record(row.iter().map(|v| format!("{v:e}"))).map_err(|e| Se2Error::Format(e.to_string()))?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_csv_matrix<R: BufRead>(r: R) -> Result<Image> {
    let mut rd = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(r);
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for rec in rd.records() {
        let rec = rec.map_err(|e| Se2Error::Format(e.to_string()))?;
        if *cols.get_or_insert(rec.len()) != rec.len() {
            return Err(Se2Error::Format(format!("row {rows} has {} columns", rec.len())));
        }
        for s in rec.iter() {
            data.push(s.parse::<f64>().map_err(|_| Se2Error::Format(format!("bad number '{s}'")))?);
        }
        rows += 1;
    }
    Image::new(rows, cols.unwrap_or(0), data)
}

/// θ-integrated field as an image: x to the right, y upwards.
pub fn marginal_image(field: &Se2Field) -> Result<Image> {
    let m = field.xy_marginal()?;
    let (nx, ny) = (field.grid.nx(), field.grid.ny());
    let mut img = Image::zeros(ny, nx);
    for i in 0..nx {
        for j in 0..ny {
            img.set(ny - 1 - j, i, m[i * ny + j]);
        }
    }
    Ok(img)
}
