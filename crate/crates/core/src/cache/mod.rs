//! A two-level cache from canonical LHSs to synthesis outcomes, with
//! static and dynamic profile counts.
//!
//! Level 1 is a hash table in memory. Level 2 is a [`SecondLevel`] store;
//! the bundled one is [`LogStore`], an append-only file (see [`log`]) whose
//! index is rebuilt in memory when it is opened. Writes reach level 1 at
//! once and level 2 on [`Cache::flush`].

pub mod log;
mod rank;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use sha2::{Digest, Sha256};

use crate::ir::{canonicalize, print_lhs, print_optimization, LeftHandSide, Optimization};
use crate::synth::SynthConfig;
pub use log::{LogFile, LogRecord};
pub use rank::{rank, RankPolicy, ReportRow};

/// A short digest of the settings a synthesis outcome depends on: the UB
/// policy, the cost model and the search space.
pub fn fingerprint(cfg: &SynthConfig) -> String {
    let mut components: Vec<String> = cfg.components.iter().map(|op| op.to_string()).collect();
    components.sort();
    let text = format!(
        "ub={};cost={};mode={:?};max_cost={};num_const={};components={}",
        cfg.policy.name(),
        cfg.cost_model.fingerprint(),
        cfg.mode,
        cfg.max_cost,
        cfg.num_const,
        components.join(",")
    );
    hex::encode(&Sha256::digest(text.as_bytes())[..8])
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CacheKey {
    pub fingerprint: String,
    /// The printed canonical LHS.
    pub lhs: String,
}

impl CacheKey {
    pub fn new(lhs: &LeftHandSide, fingerprint: &str) -> CacheKey {
        CacheKey {
            fingerprint: fingerprint.to_string(),
            lhs: print_lhs(&canonicalize(lhs)),
        }
    }
}

impl fmt::Display for CacheKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.fingerprint, self.lhs.trim_end().replace('\n', "; "))
    }
}

/// The RHS part of an optimization's text: the lines printed after its LHS.
/// `opt.lhs` must be canonical for this to pair with [`CacheKey::new`].
pub fn rhs_text(opt: &Optimization) -> String {
    let lhs = print_lhs(&opt.lhs);
    let full = print_optimization(opt);
    debug_assert!(full.starts_with(&lhs));
    full[lhs.len()..].to_string()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheEntry {
    /// `None` records that no cheaper RHS was found.
    pub rhs: Option<String>,
    pub static_count: u64,
    pub dynamic_count: u64,
    /// When the outcome was recorded, in seconds since the Unix epoch.
    pub recorded_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Lookup {
    Hit(CacheEntry),
    Miss,
}

#[derive(Debug, thiserror::Error)]
pub enum CacheError {
    #[error("{path}: {source}", path = .0.display(), source = .1)]
    Io(PathBuf, #[source] std::io::Error),
    #[error("{}: corrupt record at byte {offset}", path.display())]
    Corrupt { path: PathBuf, offset: u64 },
    #[error("conflicting outcomes for {key}: {old:?} then {new:?}")]
    Conflict {
        key: CacheKey,
        old: Option<String>,
        new: Option<String>,
    },
    #[error("no outcome recorded for {0}")]
    Unrecorded(CacheKey),
    #[error("line {line}: {message}")]
    Counts { line: usize, message: String },
}

/// A persistent store of log records. A networked key-value service would
/// implement this.
pub trait SecondLevel: Send + Sync {
    /// Every record the store holds, in the order it received them.
    fn load(&mut self) -> Result<Vec<LogRecord>, CacheError>;
    fn append(&mut self, records: &[LogRecord]) -> Result<(), CacheError>;
}

/// A [`SecondLevel`] backed by a log file.
#[derive(Debug)]
pub struct LogStore {
    file: LogFile,
    initial: Option<Vec<LogRecord>>,
}

impl LogStore {
    pub fn open(path: &Path) -> Result<LogStore, CacheError> {
        let (file, records) = LogFile::open(path)?;
        Ok(LogStore {
            file,
            initial: Some(records),
        })
    }
}

impl SecondLevel for LogStore {
    fn load(&mut self) -> Result<Vec<LogRecord>, CacheError> {
        Ok(self.initial.take().unwrap_or_default())
    }

    fn append(&mut self, records: &[LogRecord]) -> Result<(), CacheError> {
        self.file.append(records)
    }
}

/// A [`SecondLevel`] that forgets everything when dropped.
#[derive(Debug, Default)]
pub struct MemoryStore {
    pub records: Vec<LogRecord>,
}

impl SecondLevel for MemoryStore {
    fn load(&mut self) -> Result<Vec<LogRecord>, CacheError> {
        Ok(self.records.clone())
    }

    fn append(&mut self, records: &[LogRecord]) -> Result<(), CacheError> {
        self.records.extend_from_slice(records);
        Ok(())
    }
}

#[derive(Debug, Default)]
struct Index {
    entries: HashMap<CacheKey, CacheEntry>,
    sites: BTreeMap<String, CacheKey>,
}

impl Index {
    fn apply(&mut self, r: &LogRecord) -> Result<(), CacheError> {
        match r {
            LogRecord::Record { key, rhs, at } => match self.entries.get(key) {
                Some(e) if &e.rhs != rhs => {
                    return Err(CacheError::Conflict {
                        key: key.clone(),
                        old: e.rhs.clone(),
                        new: rhs.clone(),
                    })
                }
                Some(_) => {}
                None => {
                    self.entries.insert(
                        key.clone(),
                        CacheEntry {
                            rhs: rhs.clone(),
                            static_count: 0,
                            dynamic_count: 0,
                            recorded_at: *at,
                        },
                    );
                }
            },
            LogRecord::StaticAdd { key, n } => {
                let e = self.entries.get_mut(key).ok_or_else(|| CacheError::Unrecorded(key.clone()))?;
                e.static_count = e.static_count.saturating_add(*n);
            }
            LogRecord::DynamicAdd { key, n } => {
                let e = self.entries.get_mut(key).ok_or_else(|| CacheError::Unrecorded(key.clone()))?;
                e.dynamic_count = e.dynamic_count.saturating_add(*n);
            }
            LogRecord::SiteMap { site, key } => {
                self.sites.insert(site.clone(), key.clone());
            }
        }
        Ok(())
    }
}

/// Counts of an ingested profile.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Ingested {
    pub applied: usize,
    /// Lines naming a site the cache has never seen.
    pub unknown: usize,
}

/// The cache. All methods take `&self`; both levels synchronize internally.
pub struct Cache {
    l1: Mutex<Index>,
    l2: RwLock<Index>,
    pending: Mutex<Vec<LogRecord>>,
    store: Mutex<Box<dyn SecondLevel>>,
}

impl fmt::Debug for Cache {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Cache").finish_non_exhaustive()
    }
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

impl Cache {
    pub fn with_store(mut store: Box<dyn SecondLevel>) -> Result<Cache, CacheError> {
        let mut l2 = Index::default();
        for r in store.load()? {
            l2.apply(&r)?;
        }
        Ok(Cache {
            l1: Mutex::new(Index::default()),
            l2: RwLock::new(l2),
            pending: Mutex::new(Vec::new()),
            store: Mutex::new(store),
        })
    }

    /// A cache whose second level lives only as long as the cache.
    pub fn in_memory() -> Cache {
        Cache::with_store(Box::<MemoryStore>::default()).unwrap()
    }

    /// Opens or creates the log-backed cache at `path`.
    pub fn open(path: &Path) -> Result<Cache, CacheError> {
        Cache::with_store(Box::new(LogStore::open(path)?))
    }

    /// Finds `key` in level 1, then in level 2, promoting it on a hit.
    pub fn lookup(&self, key: &CacheKey) -> Lookup {
        let mut l1 = self.l1.lock().unwrap();
        match self.promote(&mut l1, key) {
            Some(e) => Lookup::Hit(e.clone()),
            None => Lookup::Miss,
        }
    }

    fn promote<'a>(&self, l1: &'a mut Index, key: &CacheKey) -> Option<&'a mut CacheEntry> {
        if !l1.entries.contains_key(key) {
            let e = self.l2.read().unwrap().entries.get(key).cloned()?;
            l1.entries.insert(key.clone(), e);
        }
        l1.entries.get_mut(key)
    }

    /// Stores the outcome for `key`. Recording the same outcome again is a
    /// no-op; recording a different one is an error.
    pub fn record(&self, key: &CacheKey, rhs: Option<&str>) -> Result<(), CacheError> {
        let mut l1 = self.l1.lock().unwrap();
        if let Some(e) = self.promote(&mut l1, key) {
            if e.rhs.as_deref() != rhs {
                return Err(CacheError::Conflict {
                    key: key.clone(),
                    old: e.rhs.clone(),
                    new: rhs.map(str::to_string),
                });
            }
            return Ok(());
        }
        let r = LogRecord::Record {
            key: key.clone(),
            rhs: rhs.map(str::to_string),
            at: now(),
        };
        l1.apply(&r)?;
        self.pending.lock().unwrap().push(r);
        Ok(())
    }

    fn add(&self, key: &CacheKey, n: u64, r: LogRecord) -> Result<(), CacheError> {
        let mut l1 = self.l1.lock().unwrap();
        if self.promote(&mut l1, key).is_none() {
            return Err(CacheError::Unrecorded(key.clone()));
        }
        if n > 0 {
            l1.apply(&r)?;
            self.pending.lock().unwrap().push(r);
        }
        Ok(())
    }

    pub fn bump_static(&self, key: &CacheKey) -> Result<(), CacheError> {
        self.add(key, 1, LogRecord::StaticAdd { key: key.clone(), n: 1 })
    }

    pub fn add_dynamic(&self, key: &CacheKey, n: u64) -> Result<(), CacheError> {
        self.add(key, n, LogRecord::DynamicAdd { key: key.clone(), n })
    }

    /// Notes that `site` computes the LHS of `key`.
    pub fn map_site(&self, site: &str, key: &CacheKey) {
        let mut l1 = self.l1.lock().unwrap();
        if l1.sites.get(site) == Some(key) || self.l2.read().unwrap().sites.get(site) == Some(key) {
            return;
        }
        let r = LogRecord::SiteMap {
            site: site.to_string(),
            key: key.clone(),
        };
        l1.apply(&r).unwrap();
        self.pending.lock().unwrap().push(r);
    }

    pub fn site(&self, site: &str) -> Option<CacheKey> {
        if let Some(k) = self.l1.lock().unwrap().sites.get(site) {
            return Some(k.clone());
        }
        self.l2.read().unwrap().sites.get(site).cloned()
    }

    /// Adds the dynamic counts of a `site<TAB>count` file. Blank lines and
    /// lines starting with `#` are skipped.
    pub fn ingest_dynamic(&self, text: &str) -> Result<Ingested, CacheError> {
        let mut parsed = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |message: &str| CacheError::Counts {
                line: i + 1,
                message: message.to_string(),
            };
            let (site, count) = line.rsplit_once('\t').ok_or_else(|| bad("expected `site<TAB>count`"))?;
            let n: u64 = count.trim().parse().map_err(|_| bad("count is not a 64-bit unsigned integer"))?;
            parsed.push((site.to_string(), n));
        }
        let mut out = Ingested::default();
        for (site, n) in parsed {
            match self.site(&site) {
                Some(k) => {
                    self.add_dynamic(&k, n)?;
                    out.applied += 1;
                }
                None => out.unknown += 1,
            }
        }
        Ok(out)
    }

    /// Writes everything recorded since the last flush to level 2.
    pub fn flush(&self) -> Result<(), CacheError> {
        let mut store = self.store.lock().unwrap();
        let batch = std::mem::take(&mut *self.pending.lock().unwrap());
        if batch.is_empty() {
            return Ok(());
        }
        if let Err(e) = store.append(&batch) {
            let mut pending = self.pending.lock().unwrap();
            let later = std::mem::replace(&mut *pending, batch);
            pending.extend(later);
            return Err(e);
        }
        let mut l2 = self.l2.write().unwrap();
        for r in &batch {
            l2.apply(r)?;
        }
        Ok(())
    }

    /// Every entry of both levels, ordered by key.
    pub fn entries(&self) -> Vec<(CacheKey, CacheEntry)> {
        let l1 = self.l1.lock().unwrap();
        let l2 = self.l2.read().unwrap();
        let mut all: BTreeMap<CacheKey, CacheEntry> =
            l2.entries.iter().map(|(k, e)| (k.clone(), e.clone())).collect();
        for (k, e) in &l1.entries {
            all.insert(k.clone(), e.clone());
        }
        all.into_iter().collect()
    }

    /// Number of entries currently held in level 1.
    pub fn resident(&self) -> usize {
        self.l1.lock().unwrap().entries.len()
    }
}

impl Drop for Cache {
    fn drop(&mut self) {
        if let Err(e) = self.flush() {
            ::log::error!("cache flush failed: {e}");
        }
    }
}
