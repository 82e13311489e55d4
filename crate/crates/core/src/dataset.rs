//! Image corpora: PPM (P6) and PNG ingestion, bilinear resizing and a
//! deterministic synthetic street-scene generator.

use std::fs;
use std::io::{BufReader, Write};
use std::path::Path;

use jscc_tensor::Tensor;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::rng_for;

/// Planar RGB image with values in `[0, 1]`, layout `[C, H, W]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != 3 * width * height {
            return Err(Error::Dataset(format!(
                "{} values do not form a {width}x{height} RGB image",
                data.len()
            )));
        }
        Ok(Image { width, height, data })
    }

    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }
}

/// Parses a binary PPM. Values are divided by the header's maxval.
pub fn parse_ppm(bytes: &[u8]) -> Result<Image> {
    let bad = |m: &str| Error::Dataset(format!("PPM: {m}"));
    let mut pos = 0;
    let mut fields = Vec::new();
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ASCII header"))?);
    }
    if fields[0] != "P6" {
        return Err(bad(&format!("magic {:?} is not P6", fields[0])));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad(&format!("bad header field {s:?}")));
    let (width, height, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        return Err(bad("invalid dimensions or maxval"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let bps = if maxval < 256 { 1 } else { 2 };
    let need = width * height * 3 * bps;
    let raster = bytes
        .get(pos..pos + need)
        .ok_or_else(|| bad(&format!("raster needs {need} bytes, {} available", bytes.len().saturating_sub(pos))))?;
    let sample = |i: usize| -> f64 {
        let v = if bps == 1 {
            raster[i] as usize
        } else {
            (raster[2 * i] as usize) << 8 | raster[2 * i + 1] as usize
        };
        v as f64 / maxval as f64
    };
    let mut data = vec![0.0; 3 * width * height];
    for p in 0..width * height {
        for c in 0..3 {
            data[c * width * height + p] = sample(3 * p + c);
        }
    }
    Image::new(width, height, data)
}

/// 8-bit binary PPM; values are rounded after scaling by 255.
pub fn encode_ppm(img: &Image) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    let plane = img.width * img.height;
    for p in 0..plane {
        for c in 0..3 {
            out.push((img.data[c * plane + p].clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    out
}

pub fn write_ppm(img: &Image, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode_ppm(img)).map_err(|e| Error::io(path, e))
}

fn read_png(path: &Path) -> Result<Image> {
    let bad = |m: String| Error::Dataset(format!("{}: {m}", path.display()));
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info().map_err(|e| bad(e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| bad("image too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| bad(e.to_string()))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Indexed => return Err(bad("palette was not expanded".into())),
    };
    let plane = w * h;
    let mut data = vec![0.0; 3 * plane];
    for p in 0..plane {
        let px = &buf[p * channels..(p + 1) * channels];
        for c in 0..3 {
            let v = if channels < 3 { px[0] } else { px[c] };
            data[c * plane + p] = v as f64 / 255.0;
        }
    }
    Image::new(w, h, data)
}

/// Reads a PPM or PNG file, chosen by extension.
pub fn read_image(path: &Path) -> Result<Image> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    match ext.as_str() {
        "ppm" | "pnm" => parse_ppm(&fs::read(path).map_err(|e| Error::io(path, e))?)
            .map_err(|e| Error::Dataset(format!("{}: {e}", path.display()))),
        "png" => read_png(path),
        _ => Err(Error::Dataset(format!("{}: unsupported image type", path.display()))),
    }
}

/// Bilinear resampling with half-pixel centres and edge clamping.
pub fn resize_bilinear(img: &Image, width: usize, height: usize) -> Image {
    if img.width == width && img.height == height {
        return img.clone();
    }
    let coords = |out: usize, input: usize| -> Vec<(usize, usize, f64)> {
        (0..out)
            .map(|o| {
                let src = ((o as f64 + 0.5) * input as f64 / out as f64 - 0.5).clamp(0.0, (input - 1) as f64);
                let i0 = src.floor() as usize;
                let i1 = (i0 + 1).min(input - 1);
                (i0, i1, src - i0 as f64)
            })
            .collect()
    };
    let xs = coords(width, img.width);
    let ys = coords(height, img.height);
    let mut data = Vec::with_capacity(3 * width * height);
    for c in 0..3 {
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                let top = img.at(c, y0, x0) * (1.0 - fx) + img.at(c, y0, x1) * fx;
                let bottom = img.at(c, y1, x0) * (1.0 - fx) + img.at(c, y1, x1) * fx;
                data.push(top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    Image { width, height, data }
}

/// A fixed-size image corpus stored as one `[N, 3, H, W]` array.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSet {
    pub height: usize,
    pub width: usize,
    pub names: Vec<String>,
    data: Vec<f64>,
}

impl ImageSet {
    pub fn from_images(images: Vec<(String, Image)>, width: usize, height: usize) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::Dataset("empty corpus".into()));
        }
        let mut names = Vec::with_capacity(images.len());
        let mut data = Vec::with_capacity(images.len() * 3 * width * height);
        for (name, img) in images {
            data.extend(resize_bilinear(&img, width, height).data);
            names.push(name);
        }
        Ok(ImageSet {
            height,
            width,
            names,
            data,
        })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (3, self.height, self.width)
    }

    pub fn image_len(&self) -> usize {
        3 * self.height * self.width
    }

    pub fn image(&self, i: usize) -> &[f64] {
        let n = self.image_len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn batch(&self, indices: &[usize]) -> Result<Tensor> {
        let mut data = Vec::with_capacity(indices.len() * self.image_len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::Dataset(format!("image index {i} out of range")));
            }
            data.extend_from_slice(self.image(i));
        }
        Ok(Tensor::new(vec![indices.len(), 3, self.height, self.width], data)?)
    }

    pub fn all(&self) -> Result<Tensor> {
        self.batch(&(0..self.len()).collect::<Vec<_>>())
    }

    pub fn subset(&self, indices: &[usize]) -> Result<ImageSet> {
        let batch = self.batch(indices)?;
        Ok(ImageSet {
            height: self.height,
            width: self.width,
            names: indices.iter().map(|&i| self.names[i].clone()).collect(),
            data: batch.into_data(),
        })
    }

    /// First `n` images and the rest.
    pub fn split(&self, n: usize) -> Result<(ImageSet, ImageSet)> {
        if n == 0 || n >= self.len() {
            return Err(Error::Dataset(format!(
                "cannot split {} images at {n}",
                self.len()
            )));
        }
        let head: Vec<usize> = (0..n).collect();
        let tail: Vec<usize> = (n..self.len()).collect();
        Ok((self.subset(&head)?, self.subset(&tail)?))
    }

    pub fn to_image(&self, i: usize) -> Image {
        Image {
            width: self.width,
            height: self.height,
            data: self.image(i).to_vec(),
        }
    }
}

/// Loads every `.ppm`/`.pnm`/`.png` in `dir` in filename order, resized to
/// `width × height`. Unreadable files are skipped with a warning.
pub fn ingest_dataset(dir: &Path, width: usize, height: usize) -> Result<ImageSet> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths: Vec<_> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
                Some("ppm" | "pnm" | "png")
            )
        })
        .collect();
    paths.sort();
    let mut images = Vec::new();
    for p in paths {
        match read_image(&p) {
            Ok(img) => images.push((p.file_name().unwrap().to_string_lossy().into_owned(), img)),
            Err(e) => log::warn!("skipping {}: {e}", p.display()),
        }
    }
    if images.is_empty() {
        return Err(Error::Dataset(format!("no readable images in {}", dir.display())));
    }
    ImageSet::from_images(images, width, height)
}

fn fill_rect(img: &mut Image, x0: usize, y0: usize, x1: usize, y1: usize, rgb: [f64; 3]) {
    let (w, h) = (img.width, img.height);
    for y in y0.min(h)..y1.min(h) {
        for x in x0.min(w)..x1.min(w) {
            for (c, v) in rgb.iter().enumerate() {
                img.data[(c * h + y) * w + x] = *v;
            }
        }
    }
}

fn jitter<R: Rng>(rng: &mut R, base: [f64; 3], amount: f64) -> [f64; 3] {
    base.map(|v| (v + rng.random_range(-amount..amount)).clamp(0.0, 1.0))
}

/// Deterministic street-like scene: sky, a row of buildings with windows, a
/// road with lane markings and a few vehicles, plus mild pixel noise.
pub fn synthetic_scene(width: usize, height: usize, seed: u64) -> Image {
    let mut rng = rng_for(seed, &[]);
    let mut img = Image {
        width,
        height,
        data: vec![0.0; 3 * width * height],
    };
    let horizon = height * rng.random_range(35..55) / 100;
    let sky_top = jitter(&mut rng, [0.45, 0.6, 0.85], 0.15);
    let sky_bottom = jitter(&mut rng, [0.75, 0.82, 0.92], 0.08);
    for y in 0..horizon {
        let t = y as f64 / horizon.max(1) as f64;
        let rgb = [0, 1, 2].map(|c| sky_top[c] * (1.0 - t) + sky_bottom[c] * t);
        fill_rect(&mut img, 0, y, width, y + 1, rgb);
    }
    let mut x = 0;
    while x < width {
        let bw = rng.random_range(width / 8..=width / 3).max(2);
        let top = rng.random_range(height / 12..=horizon.max(height / 12 + 1));
        let wall = jitter(&mut rng, [0.55, 0.5, 0.45], 0.25);
        fill_rect(&mut img, x, top, x + bw, horizon + height / 10, wall);
        let win = jitter(&mut rng, [0.25, 0.3, 0.4], 0.15);
        let mut wy = top + 1;
        while wy + 1 < horizon {
            let mut wx = x + 1;
            while wx + 1 < x + bw {
                if rng.random_bool(0.7) {
                    fill_rect(&mut img, wx, wy, wx + 1, wy + 1, win);
                }
                wx += 2;
            }
            wy += 3;
        }
        x += bw;
    }
    let road_top = horizon + height / 10;
    let asphalt = jitter(&mut rng, [0.32, 0.32, 0.34], 0.06);
    fill_rect(&mut img, 0, road_top, width, height, asphalt);
    let sidewalk = jitter(&mut rng, [0.6, 0.58, 0.55], 0.08);
    fill_rect(&mut img, 0, road_top, width, road_top + 2, sidewalk);
    let lane_y = (road_top + height) / 2 + 1;
    let mut lx = rng.random_range(0..4);
    while lx < width {
        fill_rect(&mut img, lx, lane_y, lx + 3, lane_y + 1, [0.95, 0.95, 0.9]);
        lx += 6;
    }
    for _ in 0..rng.random_range(0..=3) {
        let cw = rng.random_range(width / 8..=width / 4).max(3);
        let cx = rng.random_range(0..width.saturating_sub(cw).max(1));
        let cy = rng.random_range(road_top + 1..height.saturating_sub(3).max(road_top + 2));
        let body = jitter(&mut rng, [0.5, 0.2, 0.2], 0.45);
        fill_rect(&mut img, cx, cy, cx + cw, cy + 3, body);
        fill_rect(&mut img, cx + 1, cy + 3, cx + 2, cy + 4, [0.05, 0.05, 0.05]);
        fill_rect(&mut img, cx + cw - 2, cy + 3, cx + cw - 1, cy + 4, [0.05, 0.05, 0.05]);
    }
    for v in img.data.iter_mut() {
        *v = (*v + rng.random_range(-0.02..0.02)).clamp(0.0, 1.0);
    }
    img
}

pub fn synthetic_corpus(count: usize, width: usize, height: usize, seed: u64) -> Result<ImageSet> {
    let images = (0..count)
        .map(|i| {
            (
                format!("synth_{i:05}.ppm"),
                synthetic_scene(width, height, crate::rng::derive_seed(seed, &[i as u64])),
            )
        })
        .collect();
    ImageSet::from_images(images, width, height)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_known_bytes() {
        let mut bytes = b"P6\n# comment\n2 1\n255\n".to_vec();
        bytes.extend([0, 128, 255, 10, 20, 30]);
        let img = parse_ppm(&bytes).unwrap();
        assert_eq!((img.width, img.height), (2, 1));
        assert_eq!(img.data, vec![0.0, 10.0 / 255.0, 128.0 / 255.0, 20.0 / 255.0, 1.0, 30.0 / 255.0]);
    }

    #[test]
    fn ppm_roundtrip_and_errors() {
        let img = synthetic_scene(8, 6, 3);
        let bytes = encode_ppm(&img);
        let back = parse_ppm(&bytes).unwrap();
        for (a, b) in back.data.iter().zip(&img.data) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
        assert!(parse_ppm(&bytes[..bytes.len() - 1]).is_err());
        assert!(parse_ppm(b"P3\n1 1\n255\n").is_err());
    }

    #[test]
    fn resize_constant_stays_constant() {
        let img = Image::new(64, 64, vec![0.3; 3 * 64 * 64]).unwrap();
        let small = resize_bilinear(&img, 32, 32);
        assert!(small.data.iter().all(|&v| (v - 0.3).abs() < 1e-15));
    }

    #[test]
    fn resize_two_to_four_by_hand() {
        // Single channel pattern [[0, 1], [2, 3]] replicated over RGB.
        let plane = [0.0, 1.0, 2.0, 3.0];
        let img = Image::new(2, 2, plane.repeat(3)).unwrap();
        let big = resize_bilinear(&img, 4, 4);
        // Output centres map to source coords -0.25, 0.25, 0.75, 1.25 → clamped 0, 0.25, 0.75, 1.
        let t = [0.0, 0.25, 0.75, 1.0];
        for y in 0..4 {
            for x in 0..4 {
                let expected = t[x] + 2.0 * t[y];
                assert!((big.at(0, y, x) - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn synthetic_is_deterministic_and_in_range() {
        let a = synthetic_corpus(4, 32, 32, 11).unwrap();
        let b = synthetic_corpus(4, 32, 32, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_ne!(a.image(0), a.image(1));
    }

    #[test]
    fn split_and_batch() {
        let set = synthetic_corpus(5, 8, 8, 1).unwrap();
        let (head, tail) = set.split(2).unwrap();
        assert_eq!((head.len(), tail.len()), (2, 3));
        assert_eq!(tail.image(0), set.image(2));
        assert_eq!(set.batch(&[4, 0]).unwrap().shape(), &[2, 3, 8, 8]);
        assert!(set.split(5).is_err());
    }
}
