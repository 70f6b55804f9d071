//! Binary netpbm codecs: P5 (grayscale) and P6 (RGB), maxval 255 only.

use std::path::Path;

use super::{GrayImage, ImageError, RgbImage};

struct Header {
    width: usize,
    height: usize,
    payload_start: usize,
}

fn parse_header(bytes: &[u8], magic: &'static str) -> Result<Header, ImageError> {
    if bytes.len() < 2 || &bytes[..2] != magic.as_bytes() {
        let found = String::from_utf8_lossy(&bytes[..bytes.len().min(2)]).into_owned();
        return Err(ImageError::BadMagic { expected: magic, found });
    }
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for (i, field) in fields.iter_mut().enumerate() {
        // whitespace and comments may separate header tokens
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while let Some(&b) = bytes.get(pos) {
                        pos += 1;
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                _ => break,
            }
        }
        if i == 0 && pos == 2 {
            return Err(ImageError::BadHeader("missing whitespace after magic".into()));
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(ImageError::BadHeader(format!("expected a number at byte {start}")));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        *field = text
            .parse()
            .map_err(|_| ImageError::BadHeader(format!("number out of range: {text}")))?;
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(ImageError::BadHeader("missing whitespace before payload".into())),
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(ImageError::BadHeader(format!("zero dimension {width}x{height}")));
    }
    if maxval != 255 {
        return Err(ImageError::UnsupportedMaxval(maxval));
    }
    Ok(Header { width: width as usize, height: height as usize, payload_start: pos })
}

fn payload(bytes: &[u8], header: &Header, channels: usize) -> Result<Vec<u8>, ImageError> {
    let expected = header.width * header.height * channels;
    let available = bytes.len() - header.payload_start;
    if available < expected {
        return Err(ImageError::TruncatedPayload { expected, found: available });
    }
    Ok(bytes[header.payload_start..header.payload_start + expected].to_vec())
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage, ImageError> {
    let header = parse_header(bytes, "P5")?;
    let pixels = payload(bytes, &header, 1)?;
    GrayImage::new(header.width, header.height, pixels)
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.pixels());
    out
}

pub fn decode_ppm(bytes: &[u8]) -> Result<RgbImage, ImageError> {
    let header = parse_header(bytes, "P6")?;
    let pixels = payload(bytes, &header, 3)?;
    RgbImage::new(header.width, header.height, pixels)
}

pub fn encode_ppm(img: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.pixels());
    out
}

fn io_err(path: &Path, source: std::io::Error) -> ImageError {
    ImageError::Io { path: path.display().to_string(), source }
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage, ImageError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    decode_pgm(&bytes)
}

pub fn write_pgm(path: impl AsRef<Path>, img: &GrayImage) -> Result<(), ImageError> {
    let path = path.as_ref();
    std::fs::write(path, encode_pgm(img)).map_err(|e| io_err(path, e))
}

pub fn write_ppm(path: impl AsRef<Path>, img: &RgbImage) -> Result<(), ImageError> {
    let path = path.as_ref();
    std::fs::write(path, encode_ppm(img)).map_err(|e| io_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn decodes_small_payload() {
        let mut bytes = b"P5\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 255, 128, 7]);
        let img = decode_pgm(&bytes).unwrap();
        assert_eq!(img, GrayImage::new(2, 2, vec![0, 255, 128, 7]).unwrap());
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut bytes = b"P5 # made by hand\n# another\n1 1 255\n".to_vec();
        bytes.push(42);
        assert_eq!(decode_pgm(&bytes).unwrap().pixels(), &[42]);
    }

    #[test]
    fn rejects_wrong_magic() {
        let bytes = b"P6\n1 1\n255\n\0\0\0";
        assert!(matches!(decode_pgm(bytes), Err(ImageError::BadMagic { .. })));
        assert!(matches!(decode_ppm(b"P5\n1 1\n255\n\0"), Err(ImageError::BadMagic { .. })));
    }

    #[test]
    fn rejects_bad_headers() {
        assert!(matches!(decode_pgm(b"P5\nx 1\n255\n"), Err(ImageError::BadHeader(_))));
        assert!(matches!(decode_pgm(b"P5\n0 1\n255\n"), Err(ImageError::BadHeader(_))));
        assert!(matches!(decode_pgm(b"P5\n1 1\n65535\n\0\0"), Err(ImageError::UnsupportedMaxval(65535))));
        assert!(matches!(
            decode_pgm(b"P5\n2 2\n255\n\0\0\0"),
            Err(ImageError::TruncatedPayload { expected: 4, found: 3 })
        ));
    }

    proptest! {
        #[test]
        fn pgm_round_trip_is_byte_exact(w in 1usize..12, h in 1usize..12, seed in any::<u64>()) {
            let img = GrayImage::from_fn(w, h, |x, y| {
                (seed.wrapping_mul(31).wrapping_add((x * 7 + y * 13) as u64) % 256) as u8
            }).unwrap();
            let bytes = encode_pgm(&img);
            let back = decode_pgm(&bytes).unwrap();
            prop_assert_eq!(&back, &img);
            prop_assert_eq!(encode_pgm(&back), bytes);
        }

        #[test]
        fn ppm_round_trip_is_byte_exact(w in 1usize..8, h in 1usize..8, v in any::<u8>()) {
            let pixels = (0..3 * w * h).map(|i| v.wrapping_add(i as u8)).collect();
            let img = RgbImage::new(w, h, pixels).unwrap();
            prop_assert_eq!(decode_ppm(&encode_ppm(&img)).unwrap(), img);
        }
    }
}
