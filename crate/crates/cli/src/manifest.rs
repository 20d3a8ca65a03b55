//! The offline manifest: one text file listing every artifact with its
//! byte length, 64-bit FNV-1a hash and the wall time of the phase that
//! produced it, plus per-phase timings and the PDE solve count.
//!
//! ```text
//! ltibayes-manifest 1
//! config_hash 0x9d2c5680c1b4a0f3
//! sigma 0.0123
//! pde_solves 6
//! phase adjoint_solves 0.84
//! artifact F.btpz 36901 0x1f0d6c3b2e8a9c41 0.84
//! smw_residual 3.1e-16
//! ```

use std::fmt::Write as _;
use std::hash::Hasher;
use std::path::Path;

use fnv::FnvHasher;

use crate::error::{CliError, Result};
use crate::io::{atomic_write, read_bytes};

pub const MANIFEST_NAME: &str = "manifest.txt";
const MAGIC: &str = "ltibayes-manifest 1";

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArtifactEntry {
    pub name: String,
    pub bytes: u64,
    pub hash: u64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseTime {
    pub name: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    pub config_hash: u64,
    pub sigma: f64,
    pub pde_solves: usize,
    pub phases: Vec<PhaseTime>,
    pub artifacts: Vec<ArtifactEntry>,
    pub smw_residual: f64,
}

impl Manifest {
    /// Writes `bytes` as artifact `name` in `dir` and records it.
    pub fn store(&mut self, dir: &Path, name: &str, bytes: &[u8], seconds: f64) -> Result<()> {
        atomic_write(&dir.join(name), bytes)?;
        self.artifacts.retain(|a| a.name != name);
        self.artifacts.push(ArtifactEntry {
            name: name.to_string(),
            bytes: bytes.len() as u64,
            hash: fnv1a(bytes),
            seconds,
        });
        Ok(())
    }

    pub fn entry(&self, name: &str) -> Option<&ArtifactEntry> {
        self.artifacts.iter().find(|a| a.name == name)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{MAGIC}\n");
        writeln!(s, "config_hash {:#018x}", self.config_hash).unwrap();
        writeln!(s, "sigma {:e}", self.sigma).unwrap();
        writeln!(s, "pde_solves {}", self.pde_solves).unwrap();
        for p in &self.phases {
            writeln!(s, "phase {} {:.6}", p.name, p.seconds).unwrap();
        }
        for a in &self.artifacts {
            writeln!(s, "artifact {} {} {:#018x} {:.6}", a.name, a.bytes, a.hash, a.seconds).unwrap();
        }
        writeln!(s, "smw_residual {:e}", self.smw_residual).unwrap();
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: &str| CliError::Stale(format!("manifest line {}: {msg}", line + 1));
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l.trim() == MAGIC => {}
            _ => return Err(bad(0, "missing header")),
        }
        let hex = |s: &str| u64::from_str_radix(s.trim_start_matches("0x"), 16).ok();
        let mut m = Manifest::default();
        for (i, line) in lines {
            let f: Vec<&str> = line.split_whitespace().collect();
            match f.as_slice() {
                [] => {}
                ["config_hash", h] => m.config_hash = hex(h).ok_or_else(|| bad(i, "bad hash"))?,
                ["sigma", v] => m.sigma = v.parse().map_err(|_| bad(i, "bad sigma"))?,
                ["pde_solves", v] => m.pde_solves = v.parse().map_err(|_| bad(i, "bad count"))?,
                ["smw_residual", v] => m.smw_residual = v.parse().map_err(|_| bad(i, "bad residual"))?,
                ["phase", name, secs] => m.phases.push(PhaseTime {
                    name: name.to_string(),
                    seconds: secs.parse().map_err(|_| bad(i, "bad time"))?,
                }),
                ["artifact", name, bytes, hash, secs] => m.artifacts.push(ArtifactEntry {
                    name: name.to_string(),
                    bytes: bytes.parse().map_err(|_| bad(i, "bad length"))?,
                    hash: hex(hash).ok_or_else(|| bad(i, "bad hash"))?,
                    seconds: secs.parse().map_err(|_| bad(i, "bad time"))?,
                }),
                _ => return Err(bad(i, "unrecognized entry")),
            }
        }
        Ok(m)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        atomic_write(&dir.join(MANIFEST_NAME), self.to_text().as_bytes())
    }

    /// `None` when the directory holds no manifest.
    pub fn load(dir: &Path) -> Result<Option<Self>> {
        let path = dir.join(MANIFEST_NAME);
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        Self::parse(&text).map(Some)
    }

    /// Reads artifact `name` and checks it against its entry.
    pub fn read_checked(&self, dir: &Path, name: &str) -> Result<Vec<u8>> {
        let entry = self
            .entry(name)
            .ok_or_else(|| CliError::Stale(format!("manifest has no entry for {name}")))?;
        let path = dir.join(name);
        if !path.exists() {
            return Err(CliError::Stale(format!("{name} is listed in the manifest but missing")));
        }
        let bytes = read_bytes(&path)?;
        if bytes.len() as u64 != entry.bytes || fnv1a(&bytes) != entry.hash {
            return Err(CliError::Stale(format!(
                "{name} does not match its manifest entry ({} bytes, hash {:#018x}; expected {} bytes, {:#018x})",
                bytes.len(),
                fnv1a(&bytes),
                entry.bytes,
                entry.hash
            )));
        }
        Ok(bytes)
    }

    /// Checks every listed artifact.
    pub fn verify_all(&self, dir: &Path) -> Result<()> {
        for a in &self.artifacts {
            self.read_checked(dir, &a.name)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
    }

    #[test]
    fn text_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = Manifest { config_hash: 0xdead_beef, sigma: 0.1 + 0.2, pde_solves: 6, ..Default::default() };
        m.phases.push(PhaseTime { name: "adjoint_solves".into(), seconds: 1.5 });
        m.store(dir.path(), "a.bin", b"hello", 1.5).unwrap();
        m.smw_residual = 1.25e-15;
        let back = Manifest::parse(&m.to_text()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_text(), m.to_text());
        m.save(dir.path()).unwrap();
        assert_eq!(Manifest::load(dir.path()).unwrap().unwrap(), m);
        m.verify_all(dir.path()).unwrap();
    }

    #[test]
    fn any_single_byte_change_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let payload: Vec<u8> = (0..64u8).collect();
        let mut m = Manifest::default();
        m.store(dir.path(), "k.bin", &payload, 0.0).unwrap();
        for i in 0..payload.len() {
            for flip in [0x01u8, 0x80] {
                let mut bad = payload.clone();
                bad[i] ^= flip;
                std::fs::write(dir.path().join("k.bin"), &bad).unwrap();
                assert!(matches!(m.read_checked(dir.path(), "k.bin"), Err(CliError::Stale(_))));
            }
        }
        std::fs::write(dir.path().join("k.bin"), &payload[..63]).unwrap();
        assert!(m.verify_all(dir.path()).is_err());
    }

    #[test]
    fn missing_and_garbled() {
        let dir = tempfile::tempdir().unwrap();
        assert!(Manifest::load(dir.path()).unwrap().is_none());
        assert!(Manifest::parse("nonsense").is_err());
        assert!(Manifest::parse(&format!("{MAGIC}\nartifact x 1\n")).is_err());
    }

    proptest::proptest! {
        #[test]
        fn round_trip_and_corruption(payload in proptest::collection::vec(proptest::num::u8::ANY, 1..256),
                                     pos in proptest::num::usize::ANY, flip in 1u8..=255,
                                     sigma in 1e-12f64..1e6, secs in 0.0f64..1e4) {
            let dir = tempfile::tempdir().unwrap();
            let mut m = Manifest { config_hash: fnv1a(&payload), sigma, pde_solves: payload.len(), ..Default::default() };
            m.phases.push(PhaseTime { name: "p".into(), seconds: 1.0 });
            m.store(dir.path(), "a.bin", &payload, (secs * 1e6).round() / 1e6).unwrap();
            let back = Manifest::parse(&m.to_text()).unwrap();
            proptest::prop_assert_eq!(&back, &m);
            let mut bad = payload.clone();
            bad[pos % payload.len()] ^= flip;
            std::fs::write(dir.path().join("a.bin"), &bad).unwrap();
            proptest::prop_assert!(m.read_checked(dir.path(), "a.bin").is_err());
        }
    }
}
