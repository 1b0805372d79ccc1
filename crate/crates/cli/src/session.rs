//! Pair-comparison sessions: which variants are compared, in which pairs,
//! and on which side each variant is shown.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// A session file as written by hand.
///
/// ```toml
/// session_id = "low-key-2024"
/// seed = 1983
/// judges_expected = 50
///
/// [variants]
/// standard = "standard-proof.ppm"
/// adapted = "adapted-proof.ppm"
/// ```
///
/// Without `pairs`, every unordered pair of variants is judged once.
/// Relative image paths resolve against the session file's directory.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SessionFile {
    session_id: String,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    judges_expected: usize,
    variants: BTreeMap<String, PathBuf>,
    pairs: Option<Vec<(String, String)>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SessionPair {
    pub pair_id: String,
    /// Variant shown on the left.
    pub left: String,
    pub right: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionSpec {
    pub session_id: String,
    pub seed: u64,
    pub judges_expected: usize,
    pub variants: BTreeMap<String, PathBuf>,
    pub pairs: Vec<SessionPair>,
}

impl SessionSpec {
    /// Builds a session; each pair's sides are swapped or not by a coin
    /// flip drawn from `seed`.
    pub fn new(
        session_id: impl Into<String>,
        seed: u64,
        judges_expected: usize,
        variants: BTreeMap<String, PathBuf>,
        pairs: Option<Vec<(String, String)>>,
    ) -> Result<Self> {
        let session_id = session_id.into();
        if session_id.trim().is_empty() {
            bail!("session_id is empty");
        }
        if variants.len() < 2 {
            bail!("a session needs at least two variants, got {}", variants.len());
        }
        let names: Vec<&String> = variants.keys().collect();
        let pairs = pairs.unwrap_or_else(|| {
            let mut all = Vec::new();
            for (i, a) in names.iter().enumerate() {
                for b in &names[i + 1..] {
                    all.push(((*a).clone(), (*b).clone()));
                }
            }
            all
        });
        if pairs.is_empty() {
            bail!("session has no pairs");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let width = pairs.len().to_string().len().max(2);
        let mut out = Vec::with_capacity(pairs.len());
        for (i, (a, b)) in pairs.into_iter().enumerate() {
            for v in [&a, &b] {
                if !variants.contains_key(v) {
                    bail!("pair {} references unknown variant `{v}`", i + 1);
                }
            }
            if a == b {
                bail!("pair {} compares `{a}` with itself", i + 1);
            }
            let (left, right) = if rng.random::<bool>() { (b, a) } else { (a, b) };
            out.push(SessionPair {
                pair_id: format!("P{:0width$}", i + 1),
                left,
                right,
            });
        }
        Ok(Self {
            session_id,
            seed,
            judges_expected,
            variants,
            pairs: out,
        })
    }

    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let file: SessionFile = toml::from_str(text)?;
        let variants = file
            .variants
            .into_iter()
            .map(|(name, path)| {
                let path = if path.is_relative() { base.join(path) } else { path };
                (name, path)
            })
            .collect();
        Self::new(file.session_id, file.seed, file.judges_expected, variants, file.pairs)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading session {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let session = Self::from_toml(&text, base).with_context(|| format!("in session {}", path.display()))?;
        for (name, p) in &session.variants {
            if !p.is_file() {
                bail!("variant `{name}`: image {} does not exist", p.display());
            }
        }
        Ok(session)
    }

    pub fn pair(&self, pair_id: &str) -> Option<&SessionPair> {
        self.pairs.iter().find(|p| p.pair_id == pair_id)
    }

    /// Opaque name under which a variant's image is served, so judges never
    /// see variant names.
    pub fn token(&self, variant: &str) -> String {
        let mut h = Sha256::new();
        h.update(self.session_id.as_bytes());
        h.update([0]);
        h.update(self.seed.to_le_bytes());
        h.update(variant.as_bytes());
        h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn variants(names: &[&str]) -> BTreeMap<String, PathBuf> {
        names
            .iter()
            .map(|n| (n.to_string(), PathBuf::from(format!("{n}.ppm"))))
            .collect()
    }

    #[test]
    fn all_pairs_by_default() {
        let s = SessionSpec::new("s", 1, 0, variants(&["a", "b", "c"]), None).unwrap();
        assert_eq!(s.pairs.len(), 3);
        assert_eq!(s.pairs[0].pair_id, "P01");
        for p in &s.pairs {
            assert_ne!(p.left, p.right);
        }
    }

    #[test]
    fn sides_are_deterministic_under_seed() {
        let v = variants(&["a", "b", "c", "d", "e"]);
        let a = SessionSpec::new("s", 7, 0, v.clone(), None).unwrap();
        let b = SessionSpec::new("s", 7, 0, v.clone(), None).unwrap();
        assert_eq!(a, b);
        let swapped = a.pairs.iter().filter(|p| p.left > p.right).count();
        assert!(swapped > 0 && swapped < a.pairs.len(), "{swapped} of {}", a.pairs.len());
    }

    #[test]
    fn tokens_hide_names() {
        let s = SessionSpec::new("s", 1, 0, variants(&["standard", "adapted"]), None).unwrap();
        let t = s.token("standard");
        assert_eq!(t.len(), 16);
        assert!(!t.contains("standard"));
        assert_ne!(t, s.token("adapted"));
    }

    #[test]
    fn rejects_bad_sessions() {
        assert!(SessionSpec::new("s", 1, 0, variants(&["a"]), None).is_err());
        assert!(SessionSpec::new("", 1, 0, variants(&["a", "b"]), None).is_err());
        let unknown = Some(vec![("a".to_string(), "z".to_string())]);
        assert!(SessionSpec::new("s", 1, 0, variants(&["a", "b"]), unknown).is_err());
        let same = Some(vec![("a".to_string(), "a".to_string())]);
        assert!(SessionSpec::new("s", 1, 0, variants(&["a", "b"]), same).is_err());
    }

    #[test]
    fn parses_toml_and_resolves_paths() {
        let text = "session_id = \"x\"\nseed = 3\n[variants]\nstd = \"a.ppm\"\nnew = \"/abs/b.ppm\"\n";
        let s = SessionSpec::from_toml(text, Path::new("/data")).unwrap();
        assert_eq!(s.variants["std"], PathBuf::from("/data/a.ppm"));
        assert_eq!(s.variants["new"], PathBuf::from("/abs/b.ppm"));
        assert!(SessionSpec::from_toml("session_id = \"x\"\nbogus = 1\n[variants]\n", Path::new(".")).is_err());
    }
}
