//! 8-bit RGB rasters, binary PPM codec, STL-10 ingestion and dataset splitting.

use std::fmt;

use thiserror::Error;

use crate::prng::KeyStream;

/// Bytes in one STL-10 record: three 96×96 planes.
pub const STL10_RECORD_BYTES: usize = 3 * 96 * 96;
pub const STL10_SIDE: usize = 96;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ImageError {
    #[error("image dimensions must be at least 1x1, got {width}x{height}")]
    EmptyDimensions { width: usize, height: usize },
    #[error("pixel buffer holds {got} pixels, expected {expected}")]
    PixelCount { expected: usize, got: usize },
    #[error("not a binary PPM (P6) file")]
    BadMagic,
    #[error("malformed PPM header: {0}")]
    BadHeader(String),
    #[error("unsupported maxval {0}, only 255 is accepted")]
    UnsupportedMaxval(u32),
    #[error("truncated input: need {needed} bytes, have {have}")]
    Truncated { needed: usize, have: usize },
    #[error("dataset is empty or too small: {0}")]
    EmptyDataset(String),
    #[error("dataset images differ in size: {0}")]
    MixedDimensions(String),
    #[error("crop {size}x{size} larger than image {width}x{height}")]
    CropTooLarge { size: usize, width: usize, height: usize },
}

/// An RGB image with `width × height` pixels stored row-major.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<[u8; 3]>,
}

impl fmt::Debug for Image {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Image({}x{})", self.width, self.height)
    }
}

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<[u8; 3]>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyDimensions { width, height });
        }
        if pixels.len() != width * height {
            return Err(ImageError::PixelCount {
                expected: width * height,
                got: pixels.len(),
            });
        }
        Ok(Self { width, height, pixels })
    }

    /// Solid-color image.
    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self, ImageError> {
        Self::new(width, height, vec![rgb; width * height])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [u8; 3],
    ) -> Result<Self, ImageError> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Number of pixels, `n = U·V`.
    pub fn pixel_count(&self) -> usize {
        self.pixels.len()
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        self.pixels[y * self.width + x] = rgb;
    }

    /// Applies `f` to every pixel, keeping dimensions.
    pub fn map_pixels(&self, mut f: impl FnMut(usize, [u8; 3]) -> [u8; 3]) -> Image {
        Image {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().enumerate().map(|(i, &p)| f(i, p)).collect(),
        }
    }

    /// Channel values as a flat interleaved slice (R,G,B,R,G,B,...).
    pub fn as_bytes(&self) -> &[u8] {
        self.pixels.as_flattened()
    }

    /// Centered square crop of side `size`.
    pub fn center_crop(&self, size: usize) -> Result<Image, ImageError> {
        if size == 0 || size > self.width || size > self.height {
            return Err(ImageError::CropTooLarge {
                size,
                width: self.width,
                height: self.height,
            });
        }
        let x0 = (self.width - size) / 2;
        let y0 = (self.height - size) / 2;
        Image::from_fn(size, size, |x, y| self.pixel(x0 + x, y0 + y))
    }
}

/// Parses a binary PPM (P6, maxval 255).
pub fn load_ppm(bytes: &[u8]) -> Result<Image, ImageError> {
    if bytes.len() < 2 || &bytes[..2] != b"P6" {
        return Err(ImageError::BadMagic);
    }
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for (i, field) in fields.iter_mut().enumerate() {
        pos = skip_whitespace_and_comments(bytes, pos);
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(ImageError::BadHeader(format!("expected header field {i}")));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        *field = text
            .parse()
            .map_err(|_| ImageError::BadHeader(format!("field {i} out of range")))?;
    }
    // exactly one whitespace byte separates maxval from the raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(ImageError::BadHeader("missing separator after maxval".into()));
    }
    pos += 1;

    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(ImageError::UnsupportedMaxval(maxval));
    }
    let (width, height) = (width as usize, height as usize);
    if width == 0 || height == 0 {
        return Err(ImageError::EmptyDimensions { width, height });
    }
    let needed = 3 * width * height;
    let payload = &bytes[pos..];
    if payload.len() < needed {
        return Err(ImageError::Truncated {
            needed,
            have: payload.len(),
        });
    }
    let pixels = payload[..needed]
        .chunks_exact(3)
        .map(|c| [c[0], c[1], c[2]])
        .collect();
    Image::new(width, height, pixels)
}

fn skip_whitespace_and_comments(bytes: &[u8], mut pos: usize) -> usize {
    loop {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
        } else {
            return pos;
        }
    }
}

/// Canonical P6 encoding: `P6\n<U> <V>\n255\n` followed by the raster.
pub fn save_ppm(img: &Image) -> Vec<u8> {
    let header = format!("P6\n{} {}\n255\n", img.width, img.height);
    let mut out = Vec::with_capacity(header.len() + 3 * img.pixel_count());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(img.as_bytes());
    out
}

/// Decodes `count` records of an STL-10 binary image file.
///
/// Each record is a full red plane, then green, then blue. Planes are stored
/// column-major: the value at column `x`, row `y` sits at byte `x·96 + y`.
pub fn load_stl10(bytes: &[u8], count: usize) -> Result<Vec<Image>, ImageError> {
    let needed = count * STL10_RECORD_BYTES;
    if bytes.len() < needed {
        return Err(ImageError::Truncated {
            needed,
            have: bytes.len(),
        });
    }
    let plane = STL10_SIDE * STL10_SIDE;
    bytes[..needed]
        .chunks_exact(STL10_RECORD_BYTES)
        .map(|rec| {
            Image::from_fn(STL10_SIDE, STL10_SIDE, |x, y| {
                let at = x * STL10_SIDE + y;
                [rec[at], rec[plane + at], rec[2 * plane + at]]
            })
        })
        .collect()
}

/// Inverse of [`load_stl10`] for a single 96×96 image.
pub fn encode_stl10_record(img: &Image) -> Result<Vec<u8>, ImageError> {
    if img.dims() != (STL10_SIDE, STL10_SIDE) {
        return Err(ImageError::MixedDimensions(format!(
            "STL-10 records are 96x96, got {}x{}",
            img.width, img.height
        )));
    }
    let plane = STL10_SIDE * STL10_SIDE;
    let mut out = vec![0u8; STL10_RECORD_BYTES];
    for y in 0..STL10_SIDE {
        for x in 0..STL10_SIDE {
            let p = img.pixel(x, y);
            let at = x * STL10_SIDE + y;
            out[at] = p[0];
            out[plane + at] = p[1];
            out[2 * plane + at] = p[2];
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Train,
    Test,
}

/// Ordered, equally-sized images. Each image carries the index it had in
/// its source collection, so per-image keys and disjointness checks survive
/// splitting and reordering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    images: Vec<Image>,
    ids: Vec<usize>,
    role: Role,
}

impl Dataset {
    pub fn new(images: Vec<Image>, role: Role) -> Result<Self, ImageError> {
        let ids = (0..images.len()).collect();
        Self::with_ids(images, ids, role)
    }

    pub fn with_ids(images: Vec<Image>, ids: Vec<usize>, role: Role) -> Result<Self, ImageError> {
        if ids.len() != images.len() {
            return Err(ImageError::EmptyDataset(format!(
                "{} ids for {} images",
                ids.len(),
                images.len()
            )));
        }
        if let Some(first) = images.first() {
            if let Some(bad) = images.iter().find(|i| i.dims() != first.dims()) {
                return Err(ImageError::MixedDimensions(format!(
                    "{:?} vs {:?}",
                    first.dims(),
                    bad.dims()
                )));
            }
        }
        Ok(Self { images, ids, role })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn images(&self) -> &[Image] {
        &self.images
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn get(&self, i: usize) -> &Image {
        &self.images[i]
    }

    /// Common `(width, height)`, if any image is present.
    pub fn dims(&self) -> Option<(usize, usize)> {
        self.images.first().map(Image::dims)
    }

    pub fn into_images(self) -> Vec<Image> {
        self.images
    }

    /// Same ids and role, images replaced one-for-one.
    /// Maps every image, passing its id along.
    pub fn map_images(&self, mut f: impl FnMut(usize, &Image) -> Image) -> Result<Dataset, ImageError> {
        Dataset::with_ids(
            self.images.iter().zip(&self.ids).map(|(img, &id)| f(id, img)).collect(),
            self.ids.clone(),
            self.role,
        )
    }
}

/// Splits a training set into two disjoint halves `(T1, T2)` under a keyed
/// permutation of indices. For odd sizes `T1` receives the extra image.
pub fn split_halves(train: &Dataset, seed: u64) -> Result<(Dataset, Dataset), ImageError> {
    let n = train.len();
    if n < 2 {
        return Err(ImageError::EmptyDataset(format!(
            "need at least 2 images to split, have {n}"
        )));
    }
    let order = KeyStream::new(seed).permutation(n);
    let first = n.div_ceil(2);
    let pick = |idx: &[usize]| {
        Dataset::with_ids(
            idx.iter().map(|&i| train.images[i].clone()).collect(),
            idx.iter().map(|&i| train.ids[i]).collect(),
            train.role,
        )
    };
    Ok((pick(&order[..first])?, pick(&order[first..])?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_ppm_parses() {
        let mut bytes = b"P6 1 1 255 ".to_vec();
        bytes.extend_from_slice(&[0, 0, 0]);
        let img = load_ppm(&bytes).unwrap();
        assert_eq!(img.dims(), (1, 1));
        assert_eq!(img.pixel(0, 0), [0, 0, 0]);
    }

    #[test]
    fn save_white_pixel() {
        let img = Image::filled(1, 1, [255, 255, 255]).unwrap();
        let mut expected = b"P6\n1 1\n255\n".to_vec();
        expected.extend_from_slice(&[0xFF, 0xFF, 0xFF]);
        assert_eq!(save_ppm(&img), expected);
    }

    #[test]
    fn save_is_row_major() {
        let img = Image::new(2, 1, vec![[1, 2, 3], [4, 5, 6]]).unwrap();
        let bytes = save_ppm(&img);
        assert_eq!(&bytes[bytes.len() - 6..], &[1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn ppm_errors() {
        assert_eq!(load_ppm(b"P3 1 1 255 \x00\x00\x00"), Err(ImageError::BadMagic));
        assert_eq!(
            load_ppm(b"P6 1 1 65535 \x00\x00\x00\x00\x00\x00"),
            Err(ImageError::UnsupportedMaxval(65535))
        );
        assert_eq!(
            load_ppm(b"P6 2 1 255 \x00\x00\x00"),
            Err(ImageError::Truncated { needed: 6, have: 3 })
        );
        assert!(matches!(load_ppm(b"P6 x 1 255 "), Err(ImageError::BadHeader(_))));
    }

    #[test]
    fn ppm_header_comments_are_skipped() {
        let mut bytes = b"P6\n# made by hand\n1 1\n255\n".to_vec();
        bytes.extend_from_slice(&[9, 8, 7]);
        assert_eq!(load_ppm(&bytes).unwrap().pixel(0, 0), [9, 8, 7]);
    }

    #[test]
    fn stl10_zero_record_is_black() {
        let imgs = load_stl10(&vec![0u8; STL10_RECORD_BYTES], 1).unwrap();
        assert_eq!(imgs.len(), 1);
        assert!(imgs[0].pixels().iter().all(|&p| p == [0, 0, 0]));
    }

    #[test]
    fn stl10_planes_are_separated() {
        let mut rec = vec![0u8; STL10_RECORD_BYTES];
        rec[..96 * 96].fill(255);
        let img = &load_stl10(&rec, 1).unwrap()[0];
        assert!(img.pixels().iter().all(|&p| p == [255, 0, 0]));
    }

    #[test]
    fn stl10_planes_are_column_major() {
        let mut rec = vec![0u8; STL10_RECORD_BYTES];
        // column 2, row 5 of the green plane
        rec[96 * 96 + 2 * 96 + 5] = 77;
        let img = &load_stl10(&rec, 1).unwrap()[0];
        assert_eq!(img.pixel(2, 5), [0, 77, 0]);
        assert_eq!(img.pixel(5, 2), [0, 0, 0]);
    }

    #[test]
    fn stl10_truncated() {
        let err = load_stl10(&vec![0u8; STL10_RECORD_BYTES * 2 - 1], 2).unwrap_err();
        assert!(matches!(err, ImageError::Truncated { .. }));
    }

    fn numbered(n: usize) -> Dataset {
        let imgs = (0..n)
            .map(|i| Image::filled(2, 2, [i as u8, 0, 0]).unwrap())
            .collect();
        Dataset::new(imgs, Role::Train).unwrap()
    }

    #[test]
    fn split_even_and_odd() {
        let (a, b) = split_halves(&numbered(4), 9).unwrap();
        assert_eq!((a.len(), b.len()), (2, 2));
        let (a, b) = split_halves(&numbered(5), 9).unwrap();
        assert_eq!((a.len(), b.len()), (3, 2));
        assert!(a.ids().iter().all(|i| !b.ids().contains(i)));
    }

    #[test]
    fn split_is_deterministic() {
        let d = numbered(10);
        assert_eq!(split_halves(&d, 3).unwrap(), split_halves(&d, 3).unwrap());
    }

    #[test]
    fn split_rejects_tiny_sets() {
        assert!(matches!(
            split_halves(&numbered(1), 0),
            Err(ImageError::EmptyDataset(_))
        ));
    }

    #[test]
    fn dataset_rejects_mixed_sizes() {
        let imgs = vec![
            Image::filled(2, 2, [0; 3]).unwrap(),
            Image::filled(3, 2, [0; 3]).unwrap(),
        ];
        assert!(matches!(
            Dataset::new(imgs, Role::Test),
            Err(ImageError::MixedDimensions(_))
        ));
    }

    #[test]
    fn image_invariants() {
        assert!(Image::new(0, 1, vec![]).is_err());
        assert!(Image::new(2, 2, vec![[0; 3]; 3]).is_err());
    }
}
