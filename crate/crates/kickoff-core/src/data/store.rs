//! On-disk replay datasets: one `ep_<id>.tke` file per episode plus an
//! `index.tki` listing ids, lengths, and returns.
//!
//! Both formats are little-endian with an 8-byte ASCII magic. Files are
//! immutable once written; readers validate magic, version, and length and
//! report the byte offset of the first malformed field.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::data::episode::{episode_return, EpisodeRecord};
use crate::{Error, Result};

pub const EPISODE_MAGIC: &[u8; 8] = b"TKEP0001";
pub const INDEX_MAGIC: &[u8; 8] = b"TKIX0001";

/// Index row for one episode file.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub id: u64,
    pub steps: u32,
    pub n: u32,
    pub ret: f64,
    /// Byte offset of the first step block inside the episode file.
    pub step_offset: u64,
}

/// Handle to a dataset directory. Episode payloads stay on disk and are
/// loaded per episode via [`ReplayDataset::load`].
#[derive(Debug, Clone)]
pub struct ReplayDataset {
    pub dir: PathBuf,
    pub entries: Vec<IndexEntry>,
}

impl ReplayDataset {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn episode_path(&self, id: u64) -> PathBuf {
        self.dir.join(format!("ep_{id}.tke"))
    }

    pub fn load(&self, idx: usize) -> Result<EpisodeRecord> {
        read_episode(&self.episode_path(self.entries[idx].id))
    }
}

struct Counted<R> {
    inner: R,
    pos: u64,
}

impl<R: Read> Counted<R> {
    fn new(inner: R) -> Self {
        Counted { inner, pos: 0 }
    }

    fn take(&mut self, buf: &mut [u8], what: &'static str) -> Result<()> {
        let at = self.pos;
        self.inner.read_exact(buf).map_err(|e| Error::Format {
            what,
            offset: at,
            detail: format!("expected {} more bytes: {e}", buf.len()),
        })?;
        self.pos += buf.len() as u64;
        Ok(())
    }

    fn u8(&mut self, what: &'static str) -> Result<u8> {
        let mut b = [0u8; 1];
        self.take(&mut b, what)?;
        Ok(b[0])
    }

    fn u32(&mut self, what: &'static str) -> Result<u32> {
        let mut b = [0u8; 4];
        self.take(&mut b, what)?;
        Ok(u32::from_le_bytes(b))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64> {
        let mut b = [0u8; 8];
        self.take(&mut b, what)?;
        Ok(u64::from_le_bytes(b))
    }

    fn f64(&mut self, what: &'static str) -> Result<f64> {
        let mut b = [0u8; 8];
        self.take(&mut b, what)?;
        Ok(f64::from_le_bytes(b))
    }
}

fn check_magic(r: &mut Counted<impl Read>, expect: &[u8; 8], what: &'static str) -> Result<()> {
    let mut got = [0u8; 8];
    r.take(&mut got, what)?;
    if &got != expect {
        return Err(Error::Format {
            what,
            offset: 0,
            detail: format!("bad magic {:?}, expected {:?}", got, expect),
        });
    }
    Ok(())
}

/// Byte offset of the first step block in an episode file: magic + header.
pub fn episode_step_offset() -> u64 {
    8 + 8 + 8 + 4 + 4 + 4
}

/// Serialize one episode. Layout: magic, config_hash u64, seed u64, T u32,
/// n u32, obs_dim u32, then per step: obs (n*obs_dim f64), labels (n u8),
/// reward f64, designated u8.
pub fn encode_episode(ep: &EpisodeRecord) -> Vec<u8> {
    let t = ep.len();
    let mut out = Vec::with_capacity(
        episode_step_offset() as usize + t * (ep.n * ep.obs_dim * 8 + ep.n + 9),
    );
    out.extend_from_slice(EPISODE_MAGIC);
    out.extend_from_slice(&ep.config_hash.to_le_bytes());
    out.extend_from_slice(&ep.seed.to_le_bytes());
    out.extend_from_slice(&(t as u32).to_le_bytes());
    out.extend_from_slice(&(ep.n as u32).to_le_bytes());
    out.extend_from_slice(&(ep.obs_dim as u32).to_le_bytes());
    for step in 0..t {
        for v in ep.obs_at(step) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(ep.labels_at(step));
        out.extend_from_slice(&ep.rewards[step].to_le_bytes());
        out.push(ep.designated[step]);
    }
    out
}

pub fn read_episode(path: &Path) -> Result<EpisodeRecord> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = Counted::new(std::io::BufReader::new(file));
    let what = "episode file";
    check_magic(&mut r, EPISODE_MAGIC, what)?;
    let config_hash = r.u64(what)?;
    let seed = r.u64(what)?;
    let t = r.u32(what)? as usize;
    let n = r.u32(what)? as usize;
    let obs_dim = r.u32(what)? as usize;
    if n == 0 || n > 32 || obs_dim == 0 || obs_dim > 1 << 20 {
        return Err(Error::Format {
            what,
            offset: 24,
            detail: format!("implausible header: n={n}, obs_dim={obs_dim}"),
        });
    }
    let mut ep = EpisodeRecord {
        config_hash,
        seed,
        n,
        obs_dim,
        obs: Vec::with_capacity(t * n * obs_dim),
        labels: Vec::with_capacity(t * n),
        rewards: Vec::with_capacity(t),
        designated: Vec::with_capacity(t),
    };
    for _ in 0..t {
        for _ in 0..n * obs_dim {
            ep.obs.push(r.f64(what)?);
        }
        let mut labels = vec![0u8; n];
        r.take(&mut labels, what)?;
        ep.labels.extend_from_slice(&labels);
        ep.rewards.push(r.f64(what)?);
        ep.designated.push(r.u8(what)?);
    }
    let mut tail = [0u8; 1];
    if r.inner.read(&mut tail).map_err(|e| Error::io(path, e))? != 0 {
        return Err(Error::Format {
            what,
            offset: r.pos,
            detail: "trailing bytes after final step".to_string(),
        });
    }
    Ok(ep)
}

/// Write one episode file, removing the partial file on any failure.
pub fn write_episode(dir: &Path, id: u64, ep: &EpisodeRecord) -> Result<IndexEntry> {
    let path = dir.join(format!("ep_{id}.tke"));
    let bytes = encode_episode(ep);
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&path)?;
        f.write_all(&bytes)?;
        f.sync_all()
    };
    if let Err(e) = write() {
        let _ = fs::remove_file(&path);
        return Err(Error::io(&path, e));
    }
    Ok(IndexEntry {
        id,
        steps: ep.len() as u32,
        n: ep.n as u32,
        ret: episode_return(ep),
        step_offset: episode_step_offset(),
    })
}

pub fn write_index(dir: &Path, entries: &[IndexEntry]) -> Result<()> {
    let path = dir.join("index.tki");
    let mut out = Vec::with_capacity(8 + 4 + entries.len() * 32);
    out.extend_from_slice(INDEX_MAGIC);
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for e in entries {
        out.extend_from_slice(&e.id.to_le_bytes());
        out.extend_from_slice(&e.steps.to_le_bytes());
        out.extend_from_slice(&e.n.to_le_bytes());
        out.extend_from_slice(&e.ret.to_le_bytes());
        out.extend_from_slice(&e.step_offset.to_le_bytes());
    }
    fs::write(&path, out).map_err(|e| Error::io(&path, e))
}

/// Persist a set of in-memory episodes as a fresh dataset directory.
pub fn write_dataset(dir: &Path, episodes: &[EpisodeRecord]) -> Result<ReplayDataset> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let index_path = dir.join("index.tki");
    if index_path.exists() {
        return Err(Error::invalid(format!(
            "dataset already exists at {}",
            index_path.display()
        )));
    }
    let mut entries = Vec::with_capacity(episodes.len());
    for (id, ep) in episodes.iter().enumerate() {
        entries.push(write_episode(dir, id as u64, ep)?);
    }
    write_index(dir, &entries)?;
    Ok(ReplayDataset {
        dir: dir.to_path_buf(),
        entries,
    })
}

/// Open a dataset directory: parse the index and check it is bijective with
/// the episode files actually present.
pub fn read_dataset(dir: &Path) -> Result<ReplayDataset> {
    let path = dir.join("index.tki");
    let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
    let mut r = Counted::new(std::io::BufReader::new(file));
    let what = "index file";
    check_magic(&mut r, INDEX_MAGIC, what)?;
    let count = r.u32(what)? as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        entries.push(IndexEntry {
            id: r.u64(what)?,
            steps: r.u32(what)?,
            n: r.u32(what)?,
            ret: r.f64(what)?,
            step_offset: r.u64(what)?,
        });
    }

    let dataset = ReplayDataset {
        dir: dir.to_path_buf(),
        entries,
    };
    for e in &dataset.entries {
        let p = dataset.episode_path(e.id);
        if !p.exists() {
            return Err(Error::invalid(format!(
                "index lists episode {} but {} is missing",
                e.id,
                p.display()
            )));
        }
    }
    let mut on_disk = 0usize;
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let name = entry.map_err(|e| Error::io(dir, e))?.file_name();
        let name = name.to_string_lossy();
        if name.starts_with("ep_") && name.ends_with(".tke") {
            on_disk += 1;
        }
    }
    if on_disk != dataset.entries.len() {
        return Err(Error::invalid(format!(
            "index lists {} episodes but directory holds {} episode files",
            dataset.entries.len(),
            on_disk
        )));
    }
    Ok(dataset)
}
