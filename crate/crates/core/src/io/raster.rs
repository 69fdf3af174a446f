//! 8-bit RGB PNG ingest and export.

use std::fs::File;
use std::io::{BufReader, BufWriter, Cursor};
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::tensor::Tensor;

/// Decode an 8-bit RGB PNG into an `H×W×3` u8 tensor.
pub fn read_raster(source: impl AsRef<Path>) -> Result<Tensor> {
    let path = source.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    decode_png(BufReader::new(f)).map_err(|e| match e {
        Error::Unsupported(m) => Error::Unsupported(format!("{}: {}", path.display(), m)),
        Error::Format(m) => Error::Format(format!("{}: {}", path.display(), m)),
        other => other,
    })
}

pub fn decode_png_bytes(bytes: &[u8]) -> Result<Tensor> {
    decode_png(Cursor::new(bytes))
}

fn decode_png<R: std::io::BufRead + std::io::Seek>(r: R) -> Result<Tensor> {
    let mut decoder = png::Decoder::new(r);
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(png_err)?;
    let (color, depth) = {
        let info = reader.info();
        (info.color_type, info.bit_depth)
    };
    if color != png::ColorType::Rgb {
        return Err(Error::Unsupported(format!("expected RGB PNG, found {:?}", color)));
    }
    if depth != png::BitDepth::Eight {
        return Err(Error::Unsupported(format!("expected 8-bit PNG, found {:?}", depth)));
    }
    let size = reader.output_buffer_size().ok_or_else(|| Error::Unsupported("image too large".into()))?;
    let mut buf = vec![0u8; size];
    let frame = reader.next_frame(&mut buf).map_err(png_err)?;
    let (w, h) = (frame.width as usize, frame.height as usize);
    let line = frame.line_size;
    let mut data = Vec::with_capacity(h * w * 3);
    for row in 0..h {
        data.extend_from_slice(&buf[row * line..row * line + w * 3]);
    }
    Tensor::from_u8(vec![h, w, 3], data)
}

fn png_err(e: png::DecodingError) -> Error {
    match e {
        png::DecodingError::IoError(source) => Error::Io { path: None, source },
        other => Error::Format(format!("png: {}", other)),
    }
}

/// Encode an `H×W×3` u8 tensor as an 8-bit RGB PNG.
pub fn write_raster(img: &Tensor, destination: impl AsRef<Path>) -> Result<()> {
    let path = destination.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    encode_png(img, BufWriter::new(f))
}

pub fn encode_png<W: std::io::Write>(img: &Tensor, w: W) -> Result<()> {
    let data = img.as_u8().ok_or_else(|| Error::InvalidInput("raster must be u8".into()))?;
    let shape = img.shape();
    if shape.len() != 3 || shape[2] != 3 {
        return Err(Error::InvalidInput(format!("raster must be H×W×3, got {:?}", shape)));
    }
    let mut enc = png::Encoder::new(w, shape[1] as u32, shape[0] as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let enc_err = |e: png::EncodingError| match e {
        png::EncodingError::IoError(source) => Error::Io { path: None, source },
        other => Error::InvalidInput(format!("png: {}", other)),
    };
    let mut writer = enc.write_header().map_err(enc_err)?;
    writer.write_image_data(data).map_err(enc_err)?;
    writer.finish().map_err(enc_err)?;
    Ok(())
}
