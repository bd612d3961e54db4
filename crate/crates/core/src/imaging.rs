//! Image decoding and skin/face masking.
//!
//! Captures enter the pipeline as binary PPM (P6) files. A chroma box in
//! YCbCr space selects skin pixels, and the largest 4-connected component
//! isolates the dominant skin region (the face) from stray background hits.

use crate::error::{Error, Result};

/// Decoded 8-bit RGB image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawImage {
    width: usize,
    height: usize,
    /// Interleaved RGB bytes, length = 3 * width * height.
    data: Vec<u8>,
}

impl RawImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Format(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        let expected = 3 * width * height;
        if data.len() != expected {
            return Err(Error::Truncation(format!(
                "expected {expected} pixel bytes for {width}x{height}, got {}",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// (r, g, b) at column `x`, row `y`.
    pub fn pixel(&self, x: usize, y: usize) -> (u8, u8, u8) {
        let i = 3 * (y * self.width + x);
        (self.data[i], self.data[i + 1], self.data[i + 2])
    }

    pub fn bytes(&self) -> &[u8] {
        &self.data
    }
}

/// Boolean pixel grid; true = pixel belongs to the region of interest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::Dimension(format!(
                "mask needs {} bits for {width}x{height}, got {}",
                width * height,
                bits.len()
            )));
        }
        Ok(Self { width, height, bits })
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        Self {
            width,
            height,
            bits: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count_true(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// Chroma bounds for skin segmentation. The defaults form the standard
/// skin box in Cb/Cr space and exclude pure white and pure black, so a
/// subject captured against a white background is cleanly separated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SkinMaskParams {
    pub cb_min: u8,
    pub cb_max: u8,
    pub cr_min: u8,
    pub cr_max: u8,
}

impl Default for SkinMaskParams {
    fn default() -> Self {
        Self {
            cb_min: 77,
            cb_max: 127,
            cr_min: 133,
            cr_max: 173,
        }
    }
}

impl SkinMaskParams {
    pub fn new(cb_min: u8, cb_max: u8, cr_min: u8, cr_max: u8) -> Result<Self> {
        if cb_min > cb_max || cr_min > cr_max {
            return Err(Error::Domain(format!(
                "chroma bounds must be ordered: cb [{cb_min},{cb_max}], cr [{cr_min},{cr_max}]"
            )));
        }
        Ok(Self { cb_min, cb_max, cr_min, cr_max })
    }
}

// -------------------- PPM (P6) --------------------

/// Decodes a binary PPM (P6, maxval 255). Header comments (`#` to end of
/// line) are skipped wherever whitespace is allowed.
pub fn decode_ppm(bytes: &[u8]) -> Result<RawImage> {
    let mut cursor = HeaderCursor::new(bytes);
    let magic = cursor.take_token()?;
    if magic != b"P6" {
        return Err(Error::Format(format!(
            "not a P6 PPM: magic {:?}",
            String::from_utf8_lossy(&magic)
        )));
    }
    let width = cursor.take_usize("width")?;
    let height = cursor.take_usize("height")?;
    let maxval = cursor.take_usize("maxval")?;
    if maxval != 255 {
        return Err(Error::Unsupported(format!(
            "only maxval 255 is supported, got {maxval}"
        )));
    }
    // Exactly one whitespace byte separates the header from the payload.
    cursor.take_single_whitespace()?;
    if width == 0 || height == 0 {
        return Err(Error::Format(format!(
            "image dimensions must be positive, got {width}x{height}"
        )));
    }
    let expected = 3usize
        .checked_mul(width)
        .and_then(|n| n.checked_mul(height))
        .ok_or_else(|| Error::Format(format!("image dimensions overflow: {width}x{height}")))?;
    let payload = &bytes[cursor.pos..];
    if payload.len() < expected {
        return Err(Error::Truncation(format!(
            "pixel data ends after {} of {expected} bytes",
            payload.len()
        )));
    }
    RawImage::new(width, height, payload[..expected].to_vec())
}

/// Writes a P6 PPM; `decode_ppm` round-trips this exactly.
pub fn encode_ppm(image: &RawImage) -> Vec<u8> {
    let header = format!("P6\n{} {}\n255\n", image.width, image.height);
    let mut out = Vec::with_capacity(header.len() + image.data.len());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&image.data);
    out
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderCursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn skip_space_and_comments(&mut self) {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.pos < self.bytes.len() && self.bytes[self.pos] == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                return;
            }
        }
    }

    fn take_token(&mut self) -> Result<Vec<u8>> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len()
            && !self.bytes[self.pos].is_ascii_whitespace()
            && self.bytes[self.pos] != b'#'
        {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Format("unexpected end of PPM header".into()));
        }
        Ok(self.bytes[start..self.pos].to_vec())
    }

    fn take_usize(&mut self, what: &str) -> Result<usize> {
        let token = self.take_token()?;
        std::str::from_utf8(&token)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| {
                Error::Format(format!(
                    "invalid {what} in PPM header: {:?}",
                    String::from_utf8_lossy(&token)
                ))
            })
    }

    fn take_single_whitespace(&mut self) -> Result<()> {
        if self.pos < self.bytes.len() && self.bytes[self.pos] == b'#' {
            // A comment may still sit between maxval and the payload.
            self.skip_space_and_comments();
            return Ok(());
        }
        if self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
            Ok(())
        } else {
            Err(Error::Format(
                "missing whitespace between PPM header and pixel data".into(),
            ))
        }
    }
}

// -------------------- Masking --------------------

/// Rounds half away from zero, matching the chroma quantization contract.
fn round_chroma(v: f64) -> i32 {
    v.round() as i32
}

/// Cb/Cr of an RGB pixel, rounded to integers.
pub fn pixel_chroma(r: u8, g: u8, b: u8) -> (i32, i32) {
    let (r, g, b) = (r as f64, g as f64, b as f64);
    let cb = 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b;
    let cr = 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b;
    (round_chroma(cb), round_chroma(cr))
}

/// Marks every pixel whose rounded Cb and Cr both fall inside the chroma
/// box. Pixel-local: each output bit depends on its own pixel only.
pub fn skin_mask(image: &RawImage, params: SkinMaskParams) -> Mask {
    let mut bits = Vec::with_capacity(image.width * image.height);
    for chunk in image.data.chunks_exact(3) {
        let (cb, cr) = pixel_chroma(chunk[0], chunk[1], chunk[2]);
        let hit = cb >= params.cb_min as i32
            && cb <= params.cb_max as i32
            && cr >= params.cr_min as i32
            && cr <= params.cr_max as i32;
        bits.push(hit);
    }
    Mask {
        width: image.width,
        height: image.height,
        bits,
    }
}

/// Keeps only the largest 4-connected true component. Ties go to the
/// component whose top-left pixel comes first in row-major order; an empty
/// mask stays empty.
pub fn largest_region(mask: &Mask) -> Mask {
    let (w, h) = (mask.width, mask.height);
    let mut visited = vec![false; w * h];
    let mut best: Option<(usize, Vec<usize>)> = None; // (size, member indices)
    let mut stack = Vec::new();

    for start in 0..w * h {
        if !mask.bits[start] || visited[start] {
            continue;
        }
        let mut members = Vec::new();
        visited[start] = true;
        stack.push(start);
        while let Some(i) = stack.pop() {
            members.push(i);
            let (x, y) = (i % w, i / w);
            let mut push = |j: usize| {
                if mask.bits[j] && !visited[j] {
                    visited[j] = true;
                    stack.push(j);
                }
            };
            if x > 0 {
                push(i - 1);
            }
            if x + 1 < w {
                push(i + 1);
            }
            if y > 0 {
                push(i - w);
            }
            if y + 1 < h {
                push(i + w);
            }
        }
        // Strict comparison keeps the earlier (row-major) component on ties.
        let size = members.len();
        if best.as_ref().map_or(true, |(s, _)| size > *s) {
            best = Some((size, members));
        }
    }

    let mut bits = vec![false; w * h];
    if let Some((_, members)) = best {
        for i in members {
            bits[i] = true;
        }
    }
    Mask {
        width: w,
        height: h,
        bits,
    }
}

/// Fraction of pixels inside the mask, in [0, 1].
pub fn mask_coverage(mask: &Mask) -> f64 {
    mask.count_true() as f64 / (mask.width * mask.height) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ppm(header: &str, payload: &[u8]) -> Vec<u8> {
        let mut v = header.as_bytes().to_vec();
        v.extend_from_slice(payload);
        v
    }

    #[test]
    fn decode_two_pixel_image() {
        let bytes = ppm("P6 2 1 255\n", &[255, 255, 255, 0, 0, 0]);
        let img = decode_ppm(&bytes).unwrap();
        assert_eq!((img.width(), img.height()), (2, 1));
        assert_eq!(img.pixel(0, 0), (255, 255, 255));
        assert_eq!(img.pixel(1, 0), (0, 0, 0));
    }

    #[test]
    fn decode_truncated_payload() {
        let bytes = ppm("P6 1 1 255\n", &[10, 20]);
        match decode_ppm(&bytes) {
            Err(Error::Truncation(_)) => {}
            other => panic!("expected TruncationError, got {other:?}"),
        }
    }

    #[test]
    fn decode_wrong_magic() {
        let bytes = ppm("P5 1 1 255\n", &[0]);
        match decode_ppm(&bytes) {
            Err(Error::Format(_)) => {}
            other => panic!("expected FormatError, got {other:?}"),
        }
    }

    #[test]
    fn decode_rejects_nonstandard_maxval() {
        let bytes = ppm("P6 1 1 65535\n", &[0; 6]);
        match decode_ppm(&bytes) {
            Err(Error::Unsupported(_)) => {}
            other => panic!("expected UnsupportedError, got {other:?}"),
        }
    }

    #[test]
    fn decode_skips_header_comments() {
        let bytes = ppm("P6 # comment\n2 # w\n 1 # h\n255\n", &[1, 2, 3, 4, 5, 6]);
        let img = decode_ppm(&bytes).unwrap();
        assert_eq!((img.width(), img.height()), (2, 1));
        assert_eq!(img.pixel(1, 0), (4, 5, 6));
    }

    #[test]
    fn decode_rejects_zero_dimension() {
        let bytes = ppm("P6 0 3 255\n", &[]);
        assert!(matches!(decode_ppm(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn skin_chroma_hand_evaluated() {
        // 128 - 0.168736*200 - 0.331264*120 + 0.5*100 = 104.50112 -> 105
        // 128 + 0.5*200 - 0.418688*120 - 0.081312*100 = 169.62624 -> 170
        assert_eq!(pixel_chroma(200, 120, 100), (105, 170));
        assert_eq!(pixel_chroma(255, 255, 255), (128, 128));
        assert_eq!(pixel_chroma(0, 0, 0), (128, 128));
    }

    #[test]
    fn skin_mask_default_bounds() {
        let img = RawImage::new(
            3,
            1,
            vec![200, 120, 100, 255, 255, 255, 0, 0, 0],
        )
        .unwrap();
        let mask = skin_mask(&img, SkinMaskParams::default());
        assert!(mask.get(0, 0), "skin-tone pixel must be in-mask");
        assert!(!mask.get(1, 0), "white background must be excluded");
        assert!(!mask.get(2, 0), "black must be excluded");
    }

    #[test]
    fn skin_params_validate_ordering() {
        assert!(SkinMaskParams::new(100, 50, 0, 255).is_err());
        assert!(SkinMaskParams::new(50, 100, 0, 255).is_ok());
    }

    fn mask_from_rows(rows: &[&str]) -> Mask {
        let h = rows.len();
        let w = rows[0].len();
        let bits = rows
            .iter()
            .flat_map(|r| r.chars().map(|c| c == '#'))
            .collect();
        Mask::new(w, h, bits).unwrap()
    }

    #[test]
    fn largest_region_keeps_biggest_blob() {
        let mask = mask_from_rows(&[
            "##....", //
            "#...##",
            "......",
        ]);
        let out = largest_region(&mask);
        assert_eq!(out.count_true(), 3);
        assert!(out.get(0, 0) && out.get(1, 0) && out.get(0, 1));
        assert!(!out.get(4, 1) && !out.get(5, 1));
    }

    #[test]
    fn largest_region_empty_stays_empty() {
        let mask = Mask::filled(4, 3, false);
        assert_eq!(largest_region(&mask).count_true(), 0);
    }

    #[test]
    fn largest_region_tie_breaks_on_row_major_first_pixel() {
        let mut bits = vec![false; 8 * 8];
        // Two 2-pixel blobs: one starting at (0,0), one at (5,5).
        bits[0] = true;
        bits[1] = true;
        bits[5 * 8 + 5] = true;
        bits[5 * 8 + 6] = true;
        let mask = Mask::new(8, 8, bits).unwrap();
        let out = largest_region(&mask);
        assert_eq!(out.count_true(), 2);
        assert!(out.get(0, 0) && out.get(1, 0));
        assert!(!out.get(5, 5));
    }

    #[test]
    fn coverage_values() {
        assert_eq!(mask_coverage(&Mask::filled(2, 2, true)), 1.0);
        assert_eq!(mask_coverage(&Mask::filled(2, 2, false)), 0.0);
        let m = Mask::new(2, 2, vec![true, false, false, false]).unwrap();
        assert_eq!(mask_coverage(&m), 0.25);
    }

    prop_compose! {
        fn arb_image()(w in 1usize..12, h in 1usize..12)
            (w in Just(w), h in Just(h),
             data in prop::collection::vec(any::<u8>(), 3 * w * h)) -> RawImage {
            RawImage::new(w, h, data).unwrap()
        }
    }

    proptest! {
        #[test]
        fn ppm_round_trip(img in arb_image()) {
            let decoded = decode_ppm(&encode_ppm(&img)).unwrap();
            prop_assert_eq!(decoded, img);
        }

        #[test]
        fn skin_mask_is_pixel_local(img in arb_image(), swap in any::<(usize, usize)>()) {
            let h = img.height();
            let (a, b) = (swap.0 % h, swap.1 % h);
            // Permute two rows of the image; the mask must permute the same rows.
            let w = img.width();
            let mut data = img.bytes().to_vec();
            for x in 0..3 * w {
                data.swap(a * 3 * w + x, b * 3 * w + x);
            }
            let permuted = RawImage::new(w, h, data).unwrap();
            let m0 = skin_mask(&img, SkinMaskParams::default());
            let m1 = skin_mask(&permuted, SkinMaskParams::default());
            for y in 0..h {
                let src = if y == a { b } else if y == b { a } else { y };
                for x in 0..w {
                    prop_assert_eq!(m1.get(x, y), m0.get(x, src));
                }
            }
        }

        #[test]
        fn largest_region_subset_and_connected(
            w in 1usize..10, h in 1usize..10, seed in any::<u64>()
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let bits: Vec<bool> = (0..w * h).map(|_| rng.gen_bool(0.5)).collect();
            let mask = Mask::new(w, h, bits).unwrap();
            let out = largest_region(&mask);

            // Subset of the input.
            for i in 0..w * h {
                prop_assert!(!out.bits()[i] || mask.bits()[i]);
            }
            prop_assert!(mask_coverage(&out) <= mask_coverage(&mask));

            // All true bits form one 4-connected component: flood from the
            // first true bit and require full coverage.
            let total = out.count_true();
            if total > 0 {
                let start = out.bits().iter().position(|&b| b).unwrap();
                let mut seen = vec![false; w * h];
                let mut stack = vec![start];
                seen[start] = true;
                let mut reached = 0;
                while let Some(i) = stack.pop() {
                    reached += 1;
                    let (x, y) = (i % w, i / w);
                    let push = |j: usize, seen: &mut Vec<bool>, stack: &mut Vec<usize>| {
                        if out.bits()[j] && !seen[j] {
                            seen[j] = true;
                            stack.push(j);
                        }
                    };
                    if x > 0 { push(i - 1, &mut seen, &mut stack); }
                    if x + 1 < w { push(i + 1, &mut seen, &mut stack); }
                    if y > 0 { push(i - w, &mut seen, &mut stack); }
                    if y + 1 < h { push(i + w, &mut seen, &mut stack); }
                }
                prop_assert_eq!(reached, total);
            }
        }
    }
}
