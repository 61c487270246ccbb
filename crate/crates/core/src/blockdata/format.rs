//! SCTB container: the on-disk format for embedded tissue blocks.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic "SCTB" | version u16 (=1) | embed dim u16 | block count u32
//! per block:
//!   id length u16 | UTF-8 id
//!   detection label u8 (0 benign, 1 carcinoma, 255 unknown)
//!   primary pattern u8 (0 none, 3/4/5, 255 unknown)
//!   secondary pattern u8 (same coding)
//!   slide count u16 | tile count u32
//!   per tile: slide u16 | x i32 | y i32 | dim × f32
//! ```
//!
//! Loading parses the whole structure first and only then validates values,
//! so a block whose payload disagrees with the declared embedding dimension
//! surfaces as a schema error at the offending block instead of a cascade of
//! garbage-value errors.

use super::{Block, DetectionLabel, GradingLabel, Pattern};
use crate::error::{Result, SctError};
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;
use std::fs::File;
use std::io::{BufWriter, Cursor, Read, Write};
use std::path::Path;

pub const SCTB_MAGIC: &[u8; 4] = b"SCTB";
pub const SCTB_VERSION: u16 = 1;

fn label_to_u8(label: DetectionLabel) -> u8 {
    match label {
        DetectionLabel::Benign => 0,
        DetectionLabel::Carcinoma => 1,
        DetectionLabel::Unknown => 255,
    }
}

fn label_from_u8(v: u8, block: &str) -> Result<DetectionLabel> {
    match v {
        0 => Ok(DetectionLabel::Benign),
        1 => Ok(DetectionLabel::Carcinoma),
        255 => Ok(DetectionLabel::Unknown),
        other => Err(SctError::Data(format!(
            "block {block}: invalid detection label byte {other}"
        ))),
    }
}

fn pattern_to_u8(p: Pattern) -> u8 {
    match p {
        Pattern::None => 0,
        Pattern::P3 => 3,
        Pattern::P4 => 4,
        Pattern::P5 => 5,
    }
}

fn pattern_from_u8(v: u8, block: &str) -> Result<Option<Pattern>> {
    match v {
        0 => Ok(Some(Pattern::None)),
        3 => Ok(Some(Pattern::P3)),
        4 => Ok(Some(Pattern::P4)),
        5 => Ok(Some(Pattern::P5)),
        255 => Ok(None),
        other => Err(SctError::Data(format!(
            "block {block}: invalid pattern byte {other}"
        ))),
    }
}

/// Serialize blocks to `path`. All blocks must share one embedding
/// dimension; the writer names the first offender otherwise.
pub fn write_blocks<P: AsRef<Path>>(path: P, blocks: &[Block]) -> Result<()> {
    if blocks.is_empty() {
        return Err(SctError::Input("refusing to write an empty dataset".into()));
    }
    let dim = blocks[0].embed_dim();
    for (i, b) in blocks.iter().enumerate() {
        if b.embed_dim() != dim {
            return Err(SctError::Schema(format!(
                "block {} ({}): embedding dim {} differs from dim {} of block 1",
                i + 1,
                b.block_id,
                b.embed_dim(),
                dim
            )));
        }
        b.validate()?;
    }
    if dim > u16::MAX as usize {
        return Err(SctError::Schema(format!("embedding dim {dim} exceeds u16")));
    }

    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(SCTB_MAGIC)?;
    w.write_u16::<LittleEndian>(SCTB_VERSION)?;
    w.write_u16::<LittleEndian>(dim as u16)?;
    w.write_u32::<LittleEndian>(blocks.len() as u32)?;
    for b in blocks {
        let id = b.block_id.as_bytes();
        if id.len() > u16::MAX as usize {
            return Err(SctError::Schema(format!("block id {} too long", b.block_id)));
        }
        w.write_u16::<LittleEndian>(id.len() as u16)?;
        w.write_all(id)?;
        w.write_u8(label_to_u8(b.label))?;
        match b.grading {
            Some(g) => {
                w.write_u8(pattern_to_u8(g.primary))?;
                w.write_u8(pattern_to_u8(g.secondary))?;
            }
            None => {
                w.write_u8(255)?;
                w.write_u8(255)?;
            }
        }
        w.write_u16::<LittleEndian>(b.n_slides() as u16)?;
        w.write_u32::<LittleEndian>(b.n_tiles() as u32)?;
        for t in 0..b.n_tiles() {
            w.write_u16::<LittleEndian>(b.slide_idx[t])?;
            w.write_i32::<LittleEndian>(b.coords[[t, 0]])?;
            w.write_i32::<LittleEndian>(b.coords[[t, 1]])?;
            for &v in b.features.row(t) {
                w.write_u32::<LittleEndian>(v.to_bits())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

struct RawBlock {
    block_id: String,
    label: u8,
    primary: u8,
    secondary: u8,
    slide_count: u16,
    tiles: Array2<f32>,
    coords: Array2<i32>,
    slide_idx: Vec<u16>,
}

/// Load blocks from an SCTB file, preserving file order.
pub fn load_blocks<P: AsRef<Path>>(path: P) -> Result<Vec<Block>> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    let mut cur = Cursor::new(&bytes[..]);

    let mut magic = [0u8; 4];
    cur.read_exact(&mut magic)
        .map_err(|_| SctError::Format("file too short for SCTB header".into()))?;
    if &magic != SCTB_MAGIC {
        return Err(SctError::Format(format!(
            "bad magic {:?}, expected \"SCTB\"",
            String::from_utf8_lossy(&magic)
        )));
    }
    let version = cur
        .read_u16::<LittleEndian>()
        .map_err(|_| SctError::Format("truncated header".into()))?;
    if version != SCTB_VERSION {
        return Err(SctError::Format(format!(
            "unsupported SCTB version {version} (this build reads version {SCTB_VERSION})"
        )));
    }
    let dim = cur
        .read_u16::<LittleEndian>()
        .map_err(|_| SctError::Format("truncated header".into()))? as usize;
    if dim == 0 {
        return Err(SctError::Schema("embedding dim 0 in header".into()));
    }
    let n_blocks = cur
        .read_u32::<LittleEndian>()
        .map_err(|_| SctError::Format("truncated header".into()))? as usize;

    // Structural pass: any desync (truncation, oversized payload) is a
    // schema error naming the block where the layout broke down.
    let mut raw = Vec::with_capacity(n_blocks);
    for bi in 1..=n_blocks {
        raw.push(read_raw_block(&mut cur, dim, bi)?);
    }
    if (cur.position() as usize) < bytes.len() {
        return Err(SctError::Schema(format!(
            "{} trailing bytes after block {n_blocks}; a block payload does not match \
             the declared embedding dim {dim} or tile counts",
            bytes.len() - cur.position() as usize
        )));
    }

    // Value pass.
    let mut blocks = Vec::with_capacity(n_blocks);
    for r in raw {
        let label = label_from_u8(r.label, &r.block_id)?;
        let primary = pattern_from_u8(r.primary, &r.block_id)?;
        let secondary = pattern_from_u8(r.secondary, &r.block_id)?;
        let grading = match (primary, secondary) {
            (Some(p), Some(s)) => Some(GradingLabel { primary: p, secondary: s }),
            (None, None) => None,
            _ => {
                return Err(SctError::Data(format!(
                    "block {}: one pattern byte is unknown (255) and the other is not",
                    r.block_id
                )))
            }
        };
        let block = Block {
            block_id: r.block_id,
            features: r.tiles,
            coords: r.coords,
            slide_idx: r.slide_idx,
            label,
            grading,
        };
        block.validate()?;
        if block.n_slides() != r.slide_count as usize {
            return Err(SctError::Data(format!(
                "block {}: declared {} slides but tiles reference {}",
                block.block_id,
                r.slide_count,
                block.n_slides()
            )));
        }
        blocks.push(block);
    }
    Ok(blocks)
}

fn read_raw_block(cur: &mut Cursor<&[u8]>, dim: usize, index: usize) -> Result<RawBlock> {
    let schema = |what: &str| SctError::Schema(format!("block {index}: truncated while reading {what}"));

    let id_len = cur.read_u16::<LittleEndian>().map_err(|_| schema("id length"))? as usize;
    let mut id = vec![0u8; id_len];
    cur.read_exact(&mut id).map_err(|_| schema("id"))?;
    let block_id = String::from_utf8(id)
        .map_err(|_| SctError::Data(format!("block {index}: id is not valid UTF-8")))?;

    let label = cur.read_u8().map_err(|_| schema("label"))?;
    let primary = cur.read_u8().map_err(|_| schema("primary pattern"))?;
    let secondary = cur.read_u8().map_err(|_| schema("secondary pattern"))?;
    let slide_count = cur.read_u16::<LittleEndian>().map_err(|_| schema("slide count"))?;
    let tile_count = cur.read_u32::<LittleEndian>().map_err(|_| schema("tile count"))? as usize;

    let mut features = Vec::with_capacity(tile_count * dim);
    let mut coords = Vec::with_capacity(tile_count * 2);
    let mut slide_idx = Vec::with_capacity(tile_count);
    for _ in 0..tile_count {
        slide_idx.push(cur.read_u16::<LittleEndian>().map_err(|_| schema("tile slide index"))?);
        coords.push(cur.read_i32::<LittleEndian>().map_err(|_| schema("tile x"))?);
        coords.push(cur.read_i32::<LittleEndian>().map_err(|_| schema("tile y"))?);
        for _ in 0..dim {
            features.push(f32::from_bits(
                cur.read_u32::<LittleEndian>().map_err(|_| schema("tile features"))?,
            ));
        }
    }
    let tiles = Array2::from_shape_vec((tile_count, dim), features)
        .map_err(|e| SctError::Schema(format!("block {index}: {e}")))?;
    let coords = Array2::from_shape_vec((tile_count, 2), coords)
        .map_err(|e| SctError::Schema(format!("block {index}: {e}")))?;
    Ok(RawBlock {
        block_id,
        label,
        primary,
        secondary,
        slide_count,
        tiles,
        coords,
        slide_idx,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blockdata::SynthConfig;
    use byteorder::{LittleEndian, WriteBytesExt};
    use std::io::Write;

    fn sample_blocks() -> Vec<Block> {
        crate::blockdata::synth_generate(&SynthConfig {
            n_blocks: 3,
            embed_dim: 4,
            tiles_per_slide: (3, 6),
            slides_per_block: (1, 2),
            seed: 9,
            ..SynthConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn round_trip_is_bitwise_identical() {
        let blocks = sample_blocks();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.sctb");
        write_blocks(&path, &blocks).unwrap();
        let loaded = load_blocks(&path).unwrap();
        assert_eq!(loaded.len(), blocks.len());
        for (a, b) in blocks.iter().zip(&loaded) {
            assert_eq!(a.block_id, b.block_id);
            assert_eq!(a.label, b.label);
            assert_eq!(a.grading, b.grading);
            assert_eq!(a.coords, b.coords);
            assert_eq!(a.slide_idx, b.slide_idx);
            assert_eq!(a.features.len(), b.features.len());
            for (x, y) in a.features.iter().zip(b.features.iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn bad_magic_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.sctb");
        std::fs::write(&path, b"XXXX\x01\x00\x04\x00\x00\x00\x00\x00").unwrap();
        assert!(matches!(load_blocks(&path), Err(SctError::Format(_))));
    }

    #[test]
    fn future_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v2.sctb");
        let mut buf = Vec::new();
        buf.extend_from_slice(b"SCTB");
        buf.write_u16::<LittleEndian>(2).unwrap();
        buf.write_u16::<LittleEndian>(4).unwrap();
        buf.write_u32::<LittleEndian>(0).unwrap();
        std::fs::write(&path, &buf).unwrap();
        assert!(matches!(load_blocks(&path), Err(SctError::Format(_))));
    }

    /// A hand-built file whose second block was written with dim 8 while the
    /// header declares dim 4: the structural pass must call out block 2.
    #[test]
    fn inconsistent_dim_is_a_schema_error_naming_block_two() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mixed.sctb");
        let mut buf = Vec::new();
        buf.extend_from_slice(b"SCTB");
        buf.write_u16::<LittleEndian>(1).unwrap();
        buf.write_u16::<LittleEndian>(4).unwrap(); // header dim
        buf.write_u32::<LittleEndian>(2).unwrap();
        for (bi, dim) in [(1u8, 4usize), (2u8, 8usize)] {
            buf.write_u16::<LittleEndian>(2).unwrap();
            buf.write_all(&[b'b', b'0' + bi]).unwrap();
            buf.write_u8(0).unwrap(); // benign
            buf.write_u8(255).unwrap();
            buf.write_u8(255).unwrap();
            buf.write_u16::<LittleEndian>(1).unwrap(); // one slide
            buf.write_u32::<LittleEndian>(1).unwrap(); // one tile
            buf.write_u16::<LittleEndian>(1).unwrap();
            buf.write_i32::<LittleEndian>(0).unwrap();
            buf.write_i32::<LittleEndian>(0).unwrap();
            for d in 0..dim {
                buf.write_u32::<LittleEndian>((d as f32).to_bits()).unwrap();
            }
        }
        std::fs::write(&path, &buf).unwrap();
        match load_blocks(&path) {
            Err(SctError::Schema(msg)) => assert!(msg.contains("block 2"), "message: {msg}"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn truncated_file_is_a_schema_error() {
        let blocks = sample_blocks();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.sctb");
        write_blocks(&path, &blocks).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 7]).unwrap();
        assert!(matches!(load_blocks(&path), Err(SctError::Schema(_))));
    }

    #[test]
    fn non_finite_feature_names_block_and_tile() {
        let mut blocks = sample_blocks();
        blocks[1].features[[2, 1]] = f32::NAN;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nan.sctb");
        // bypass write-side validation by patching bytes of a valid file
        blocks[1].features[[2, 1]] = 1.0;
        write_blocks(&path, &blocks).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        // find the f32 bit pattern of the patched value and corrupt it
        let needle = 1.0f32.to_bits().to_le_bytes();
        let pos = bytes
            .windows(4)
            .position(|w| w == needle)
            .expect("pattern present");
        bytes[pos..pos + 4].copy_from_slice(&f32::NAN.to_bits().to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        match load_blocks(&path) {
            Err(SctError::Data(msg)) => {
                assert!(msg.contains("non-finite"), "message: {msg}")
            }
            other => panic!("expected data error, got {other:?}"),
        }
    }
}
