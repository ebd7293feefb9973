//! Heap file format.
//!
//! Little-endian flat file: a fixed header, the descriptor area starting at
//! the next 4096-byte boundary, then the block array with each target word
//! at offset 0 of its block.
//!
//! Header layout (bytes):
//! ```text
//! 0..4    magic "PMWC"
//! 4..8    format version (u32)
//! 8..16   word_capacity (u64)
//! 16..20  block_size (u32)
//! 20..24  worker_slots (u32)
//! 24..28  variant (u32): 1 = dirty-flag, 2 = no-dirty-flag
//! 28..32  flags (u32): bit 0 = clean shutdown
//! ```

use std::fs::OpenOptions;
use std::path::Path;

use memmap2::MmapMut;

use crate::error::{Error, Result};
use crate::layout::{HeapLayout, Variant};
use crate::pmem::SharedHeap;

pub const MAGIC: &[u8; 4] = b"PMWC";
pub const FORMAT_VERSION: u32 = 1;
const FLAG_CLEAN_SHUTDOWN: u32 = 1;
const HEADER_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeapHeader {
    pub layout: HeapLayout,
    pub clean_shutdown: bool,
}

fn encode_variant(v: Variant) -> u32 {
    match v {
        Variant::DirtyFlag => 1,
        Variant::NoDirtyFlag => 2,
    }
}

fn decode_variant(raw: u32) -> Result<Variant> {
    match raw {
        1 => Ok(Variant::DirtyFlag),
        2 => Ok(Variant::NoDirtyFlag),
        other => Err(Error::Format(format!("unknown variant {other}"))),
    }
}

fn encode_header(buf: &mut [u8], header: &HeapHeader) {
    let l = &header.layout;
    buf[0..4].copy_from_slice(MAGIC);
    buf[4..8].copy_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf[8..16].copy_from_slice(&l.word_capacity.to_le_bytes());
    buf[16..20].copy_from_slice(&l.block_size.to_le_bytes());
    buf[20..24].copy_from_slice(&(l.worker_slots as u32).to_le_bytes());
    buf[24..28].copy_from_slice(&encode_variant(l.variant).to_le_bytes());
    let flags = if header.clean_shutdown {
        FLAG_CLEAN_SHUTDOWN
    } else {
        0
    };
    buf[28..32].copy_from_slice(&flags.to_le_bytes());
}

fn decode_header(buf: &[u8]) -> Result<HeapHeader> {
    if buf.len() < HEADER_LEN {
        return Err(Error::Format("file shorter than header".into()));
    }
    if &buf[0..4] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = u32::from_le_bytes(buf[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let word_capacity = u64::from_le_bytes(buf[8..16].try_into().unwrap());
    let block_size = u32::from_le_bytes(buf[16..20].try_into().unwrap());
    let worker_slots = u32::from_le_bytes(buf[20..24].try_into().unwrap()) as usize;
    let variant = decode_variant(u32::from_le_bytes(buf[24..28].try_into().unwrap()))?;
    let flags = u32::from_le_bytes(buf[28..32].try_into().unwrap());
    Ok(HeapHeader {
        layout: HeapLayout::new(word_capacity, block_size, worker_slots, variant)?,
        clean_shutdown: flags & FLAG_CLEAN_SHUTDOWN != 0,
    })
}

fn map_file(path: &Path, len: u64) -> Result<MmapMut> {
    let file = OpenOptions::new().read(true).write(true).open(path)?;
    file.set_len(len)?;
    Ok(unsafe { MmapMut::map_mut(&file)? })
}

/// Creates a zero-initialized heap file and returns the mapped heap. The
/// clean-shutdown flag starts set; callers clear it while workers run.
pub fn create_heap_file(path: &Path, layout: &HeapLayout) -> Result<SharedHeap> {
    let file = OpenOptions::new()
        .read(true)
        .write(true)
        .create(true)
        .truncate(true)
        .open(path)?;
    file.set_len(layout.file_len())?;
    drop(file);
    let mut map = map_file(path, layout.file_len())?;
    encode_header(
        &mut map[..HEADER_LEN],
        &HeapHeader {
            layout: layout.clone(),
            clean_shutdown: true,
        },
    );
    map.flush()?;
    Ok(SharedHeap::from_mmap(layout.clone(), map))
}

/// Opens an existing heap file. Returns the heap and its header (including
/// whether the last shutdown was clean, i.e. whether recovery is needed).
pub fn open_heap_file(path: &Path) -> Result<(SharedHeap, HeapHeader)> {
    let mut buf = [0u8; HEADER_LEN];
    {
        use std::io::Read;
        let mut f = std::fs::File::open(path)?;
        f.read_exact(&mut buf)?;
    }
    let header = decode_header(&buf)?;
    let map = map_file(path, header.layout.file_len())?;
    Ok((SharedHeap::from_mmap(header.layout.clone(), map), header))
}

/// Rewrites the clean-shutdown flag in the header of an open file heap.
pub fn set_clean_shutdown(path: &Path, clean: bool) -> Result<()> {
    let mut buf = [0u8; HEADER_LEN];
    {
        use std::io::Read;
        let mut f = std::fs::File::open(path)?;
        f.read_exact(&mut buf)?;
    }
    let mut header = decode_header(&buf)?;
    header.clean_shutdown = clean;
    encode_header(&mut buf, &header);
    use std::io::{Seek, SeekFrom, Write};
    let mut f = OpenOptions::new().write(true).open(path)?;
    f.seek(SeekFrom::Start(0))?;
    f.write_all(&buf)?;
    f.sync_data()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::WordAddress;
    use crate::pmem::{Memory, MemoryExt};
    use crate::tag::TaggedWord;

    fn small_layout() -> HeapLayout {
        HeapLayout::new(32, 64, 2, Variant::NoDirtyFlag).unwrap()
    }

    #[test]
    fn create_open_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("heap.pmwc");
        let layout = small_layout();
        {
            let h = create_heap_file(&path, &layout).unwrap();
            h.store_word(WordAddress(3), TaggedWord::from_payload(42))
                .unwrap();
            h.persist_word(WordAddress(3)).unwrap();
            h.sync().unwrap();
        }
        let (h, header) = open_heap_file(&path).unwrap();
        assert_eq!(header.layout, layout);
        assert!(header.clean_shutdown);
        assert_eq!(h.load_word(WordAddress(3)).unwrap().payload(), 42);
    }

    #[test]
    fn clean_shutdown_flag_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("heap.pmwc");
        create_heap_file(&path, &small_layout()).unwrap();
        set_clean_shutdown(&path, false).unwrap();
        let (_, header) = open_heap_file(&path).unwrap();
        assert!(!header.clean_shutdown);
        set_clean_shutdown(&path, true).unwrap();
        let (_, header) = open_heap_file(&path).unwrap();
        assert!(header.clean_shutdown);
    }

    #[test]
    fn rejects_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk");
        std::fs::write(&path, vec![0u8; 64]).unwrap();
        assert!(open_heap_file(&path).is_err());
    }

    #[test]
    fn word_offsets_match_block_layout() {
        let layout = small_layout();
        let cell = layout.word_cell(WordAddress(2));
        assert_eq!(
            layout.byte_offset(cell),
            layout.data_area_offset() + 2 * 64
        );
        // header never overlaps descriptor area
        assert!(layout.file_len() > layout.data_area_offset());
        let h = SharedHeap::new_dram(layout);
        assert_eq!(h.flush_count(), 0);
    }
}
