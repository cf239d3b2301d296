//! Zipf content catalog, per-slot user request sampling and the plain-text
//! trace format.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::rng::{stream, stream_rng};

/// Identifier of a content in the server catalog. Ids are 1-based and equal
/// to the popularity rank: content 1 is the most popular.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ContentId(pub u32);

impl ContentId {
    /// Zero-based position of this content in catalog-sized arrays.
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    #[inline]
    pub fn from_index(index: usize) -> Self {
        ContentId(index as u32 + 1)
    }
}

impl fmt::Display for ContentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "o{}", self.0)
    }
}

/// The server's content universe with its Zipf popularity law.
#[derive(Debug, Clone)]
pub struct Catalog {
    zipf_exponent: f64,
    popularity: Vec<f64>,
    cdf: Vec<f64>,
}

/// Builds a catalog with `popularity[i] ∝ (i + 1)^(-zipf_exponent)`.
pub fn build_catalog(size: usize, zipf_exponent: f64) -> Result<Catalog> {
    if size == 0 {
        return Err(Error::InvalidArgument("catalog size must be at least 1".into()));
    }
    if !(zipf_exponent >= 0.0 && zipf_exponent.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "zipf exponent must be a finite nonnegative number, got {zipf_exponent}"
        )));
    }
    let weights: Vec<f64> = (1..=size).map(|i| (i as f64).powf(-zipf_exponent)).collect();
    let total: f64 = weights.iter().sum();
    let popularity: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let mut acc = 0.0;
    let mut cdf: Vec<f64> = popularity
        .iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect();
    *cdf.last_mut().unwrap() = 1.0;
    Ok(Catalog {
        zipf_exponent,
        popularity,
        cdf,
    })
}

impl Catalog {
    pub fn size(&self) -> usize {
        self.popularity.len()
    }

    pub fn zipf_exponent(&self) -> f64 {
        self.zipf_exponent
    }

    pub fn popularity(&self) -> &[f64] {
        &self.popularity
    }

    pub fn contents(&self) -> impl Iterator<Item = ContentId> {
        (1..=self.size() as u32).map(ContentId)
    }

    /// One popularity-weighted draw (with replacement).
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> ContentId {
        let u: f64 = rng.gen();
        let idx = self.cdf.partition_point(|&c| c <= u).min(self.size() - 1);
        ContentId::from_index(idx)
    }

    /// `n` distinct popularity-weighted draws, in draw order.
    pub fn draw_distinct<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<ContentId> {
        let n = n.min(self.size());
        let mut picked: Vec<ContentId> = Vec::with_capacity(n);
        let mut attempts = 0usize;
        while picked.len() < n && attempts < 64 * (n + 1) {
            attempts += 1;
            let c = self.draw(rng);
            if !picked.contains(&c) {
                picked.push(c);
            }
        }
        if picked.len() < n {
            // Rejection stalls only when n is a large share of a skewed
            // catalog; finish by sequential draws over the remaining mass.
            let mut rest: Vec<(ContentId, f64)> = self
                .contents()
                .filter(|c| !picked.contains(c))
                .map(|c| (c, self.popularity[c.index()]))
                .collect();
            while picked.len() < n {
                let total: f64 = rest.iter().map(|(_, w)| w).sum();
                let mut u = rng.gen::<f64>() * total;
                let mut at = rest.len() - 1;
                for (i, (_, w)) in rest.iter().enumerate() {
                    if u < *w {
                        at = i;
                        break;
                    }
                    u -= w;
                }
                picked.push(rest.remove(at).0);
            }
        }
        picked
    }
}

/// Law of the number of contents one user requests in one slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RequestCountLaw {
    /// Poisson with the given mean, truncated to `[0, N]`.
    Poisson { mean: f64 },
    /// Every user requests exactly this many contents (capped at `N`).
    Fixed(usize),
}

impl Default for RequestCountLaw {
    fn default() -> Self {
        RequestCountLaw::Poisson { mean: 1.0 }
    }
}

/// The distinct requests of all users in one slot.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RequestBatch {
    pub slot: u64,
    /// Per-user request sets, each sorted ascending.
    pub per_user: Vec<Vec<ContentId>>,
    /// Request times `c_o` of each requested content.
    pub counts: BTreeMap<ContentId, u32>,
    /// Distinct requested contents.
    pub distinct: BTreeSet<ContentId>,
}

impl RequestBatch {
    /// Assembles a batch from raw per-user request lists.
    pub fn from_per_user(slot: u64, per_user: Vec<Vec<ContentId>>) -> Result<Self> {
        let mut counts = BTreeMap::new();
        let mut per_user = per_user;
        for (user, set) in per_user.iter_mut().enumerate() {
            set.sort_unstable();
            if set.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidArgument(format!(
                    "user {user} requests the same content twice in slot {slot}"
                )));
            }
            for &c in set.iter() {
                *counts.entry(c).or_insert(0u32) += 1;
            }
        }
        let distinct = counts.keys().copied().collect();
        Ok(RequestBatch {
            slot,
            per_user,
            counts,
            distinct,
        })
    }

    /// A slot in which `users` users request nothing.
    pub fn empty(slot: u64, users: usize) -> Self {
        RequestBatch {
            slot,
            per_user: vec![Vec::new(); users],
            ..Default::default()
        }
    }

    pub fn total_requests(&self) -> u64 {
        self.counts.values().map(|&c| c as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.distinct.is_empty()
    }

    pub fn count(&self, content: ContentId) -> u32 {
        self.counts.get(&content).copied().unwrap_or(0)
    }
}

/// Samples one slot: every user draws a request count from `law`, truncated
/// to `[0, cache_capacity]`, then that many distinct contents by popularity.
pub fn sample_slot_requests<R: Rng + ?Sized>(
    catalog: &Catalog,
    num_users: usize,
    cache_capacity: usize,
    law: RequestCountLaw,
    slot: u64,
    rng: &mut R,
) -> RequestBatch {
    let poisson = match law {
        RequestCountLaw::Poisson { mean } if mean > 0.0 => Some(Poisson::new(mean).expect("positive mean")),
        _ => None,
    };
    let per_user = (0..num_users)
        .map(|_| {
            let n = match (law, &poisson) {
                (RequestCountLaw::Fixed(n), _) => n,
                (_, Some(p)) => {
                    let draw: f64 = p.sample(rng);
                    draw as usize
                }
                _ => 0,
            };
            catalog.draw_distinct(n.min(cache_capacity), rng)
        })
        .collect();
    RequestBatch::from_per_user(slot, per_user).expect("sampled sets are distinct")
}

/// Key=value header of a trace file.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceHeader {
    pub catalog_size: usize,
    pub users: usize,
    pub cache_capacity: usize,
    pub zipf: f64,
    pub seed: u64,
    pub slots: usize,
}

/// A persisted sequence of request batches, one per slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub header: TraceHeader,
    pub batches: Vec<RequestBatch>,
}

/// Samples `slots` consecutive batches from the trace stream of `seed`.
pub fn generate_trace(
    catalog: &Catalog,
    users: usize,
    cache_capacity: usize,
    law: RequestCountLaw,
    slots: usize,
    seed: u64,
) -> Trace {
    let mut rng = stream_rng(seed, stream::TRACE, 0);
    let batches = (0..slots as u64)
        .map(|t| sample_slot_requests(catalog, users, cache_capacity, law, t, &mut rng))
        .collect();
    Trace {
        header: TraceHeader {
            catalog_size: catalog.size(),
            users,
            cache_capacity,
            zipf: catalog.zipf_exponent(),
            seed,
            slots,
        },
        batches,
    }
}

impl Trace {
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = self.to_text()?;
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        w.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn to_text(&self) -> Result<String> {
        let h = &self.header;
        if h.slots != self.batches.len() {
            return Err(Error::InvalidArgument(format!(
                "header declares {} slots but {} batches were given",
                h.slots,
                self.batches.len()
            )));
        }
        let mut out = String::new();
        out.push_str(&format!("# catalog_size={}\n", h.catalog_size));
        out.push_str(&format!("# users={}\n", h.users));
        out.push_str(&format!("# cache_capacity={}\n", h.cache_capacity));
        out.push_str(&format!("# zipf={}\n", h.zipf));
        out.push_str(&format!("# seed={}\n", h.seed));
        out.push_str(&format!("# slots={}\n", h.slots));
        for (i, batch) in self.batches.iter().enumerate() {
            if batch.slot != i as u64 {
                return Err(Error::InvalidArgument(format!(
                    "batch at position {i} carries slot {}",
                    batch.slot
                )));
            }
            if batch.per_user.len() > h.users {
                return Err(Error::InvalidArgument(format!(
                    "slot {i} has {} users, header allows {}",
                    batch.per_user.len(),
                    h.users
                )));
            }
            for (user, set) in batch.per_user.iter().enumerate() {
                for c in set {
                    if c.0 == 0 || c.0 as usize > h.catalog_size {
                        return Err(Error::InvalidArgument(format!(
                            "content {} outside catalog of size {}",
                            c.0, h.catalog_size
                        )));
                    }
                    out.push_str(&format!("{},{},{}\n", i, user, c.0));
                }
            }
        }
        Ok(out)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut fields: BTreeMap<String, (usize, String)> = BTreeMap::new();
        let mut rows: Vec<(usize, u64, usize, u32)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            if let Some(rest) = raw.strip_prefix('#') {
                if !rows.is_empty() {
                    return Err(err(line_no, "header line after data rows".into()));
                }
                let (k, v) = rest
                    .trim()
                    .split_once('=')
                    .ok_or_else(|| err(line_no, format!("expected `# key=value`, got `{raw}`")))?;
                let k = k.trim().to_string();
                if fields.insert(k.clone(), (line_no, v.trim().to_string())).is_some() {
                    return Err(err(line_no, format!("duplicate header key `{k}`")));
                }
                continue;
            }
            if raw.trim().is_empty() {
                return Err(err(line_no, "empty line".into()));
            }
            let parts: Vec<&str> = raw.split(',').collect();
            if parts.len() != 3 {
                return Err(err(line_no, format!("expected `slot,user,content`, got `{raw}`")));
            }
            let slot = parts[0]
                .parse::<u64>()
                .map_err(|e| err(line_no, format!("bad slot `{}`: {e}", parts[0])))?;
            let user = parts[1]
                .parse::<usize>()
                .map_err(|e| err(line_no, format!("bad user `{}`: {e}", parts[1])))?;
            let content = parts[2]
                .parse::<u32>()
                .map_err(|e| err(line_no, format!("bad content `{}`: {e}", parts[2])))?;
            rows.push((line_no, slot, user, content));
        }

        fn take<T: std::str::FromStr>(
            fields: &mut BTreeMap<String, (usize, String)>,
            key: &str,
            err: &dyn Fn(usize, String) -> Error,
        ) -> Result<T>
        where
            T::Err: fmt::Display,
        {
            let (line, v) = fields
                .remove(key)
                .ok_or_else(|| err(1, format!("missing header key `{key}`")))?;
            v.parse::<T>()
                .map_err(|e| err(line, format!("bad value for `{key}`: {e}")))
        }
        let header = TraceHeader {
            catalog_size: take(&mut fields, "catalog_size", &err)?,
            users: take(&mut fields, "users", &err)?,
            cache_capacity: take(&mut fields, "cache_capacity", &err)?,
            zipf: take(&mut fields, "zipf", &err)?,
            seed: take(&mut fields, "seed", &err)?,
            slots: take(&mut fields, "slots", &err)?,
        };
        if let Some((k, (line, _))) = fields.into_iter().next() {
            return Err(err(line, format!("unknown header key `{k}`")));
        }

        let mut per_slot: Vec<Vec<Vec<ContentId>>> = vec![vec![Vec::new(); header.users]; header.slots];
        let mut prev: Option<(u64, usize, u32)> = None;
        for (line_no, slot, user, content) in rows {
            if slot as usize >= header.slots {
                return Err(err(line_no, format!("slot {slot} outside declared {} slots", header.slots)));
            }
            if user >= header.users {
                return Err(err(line_no, format!("user {user} outside declared {} users", header.users)));
            }
            if content == 0 || content as usize > header.catalog_size {
                return Err(err(
                    line_no,
                    format!("content {content} outside catalog of size {}", header.catalog_size),
                ));
            }
            if let Some(p) = prev {
                if (slot, user, content) <= p {
                    return Err(err(line_no, "rows must be strictly sorted by slot, user, content".into()));
                }
            }
            prev = Some((slot, user, content));
            per_slot[slot as usize][user].push(ContentId(content));
        }
        for (slot, users) in per_slot.iter().enumerate() {
            for set in users {
                if set.len() > header.cache_capacity {
                    return Err(err(
                        1,
                        format!("slot {slot}: a user requests more than cache_capacity contents"),
                    ));
                }
            }
        }
        let batches = per_slot
            .into_iter()
            .enumerate()
            .map(|(slot, users)| RequestBatch::from_per_user(slot as u64, users))
            .collect::<Result<Vec<_>>>()?;
        Ok(Trace { header, batches })
    }
}

/// A uniformly random set of `n` distinct contents, in ascending order.
pub fn random_contents<R: Rng + ?Sized>(catalog_size: usize, n: usize, rng: &mut R) -> Vec<ContentId> {
    let mut all: Vec<ContentId> = (1..=catalog_size as u32).map(ContentId).collect();
    all.shuffle(rng);
    all.truncate(n);
    all.sort_unstable();
    all
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SimRng;
    use rand::SeedableRng;

    #[test]
    fn uniform_catalog_when_exponent_zero() {
        let c = build_catalog(2, 0.0).unwrap();
        assert_eq!(c.popularity(), &[0.5, 0.5]);
    }

    #[test]
    fn two_content_zipf_closed_form() {
        let c = build_catalog(2, 1.5).unwrap();
        let tail = 2f64.powf(-1.5);
        assert!((c.popularity()[0] - 1.0 / (1.0 + tail)).abs() < 1e-15);
        assert!((c.popularity()[1] - tail / (1.0 + tail)).abs() < 1e-15);
        assert!((c.popularity()[0] - 0.7388).abs() < 1e-4);
    }

    #[test]
    fn single_content_catalog() {
        for z in [0.0, 0.8, 3.0] {
            assert_eq!(build_catalog(1, z).unwrap().popularity(), &[1.0]);
        }
    }

    #[test]
    fn empty_catalog_rejected() {
        assert!(matches!(build_catalog(0, 1.0), Err(Error::InvalidArgument(_))));
        assert!(build_catalog(3, -0.5).is_err());
    }

    #[test]
    fn zero_mean_yields_empty_batch() {
        let c = build_catalog(50, 1.0).unwrap();
        let mut rng = SimRng::seed_from_u64(3);
        let b = sample_slot_requests(&c, 20, 5, RequestCountLaw::Poisson { mean: 0.0 }, 0, &mut rng);
        assert!(b.distinct.is_empty());
        assert!(b.counts.is_empty());
        assert_eq!(b.per_user.len(), 20);
    }

    #[test]
    fn single_content_single_user() {
        let c = build_catalog(1, 1.0).unwrap();
        let mut rng = SimRng::seed_from_u64(3);
        let b = sample_slot_requests(&c, 1, 1, RequestCountLaw::Fixed(1), 0, &mut rng);
        assert_eq!(b.counts, BTreeMap::from([(ContentId(1), 1)]));
    }

    #[test]
    fn duplicate_request_rejected() {
        let r = RequestBatch::from_per_user(0, vec![vec![ContentId(2), ContentId(2)]]);
        assert!(r.is_err());
    }

    #[test]
    fn request_count_truncated_to_capacity() {
        let c = build_catalog(100, 0.5).unwrap();
        let mut rng = SimRng::seed_from_u64(9);
        for t in 0..200 {
            let b = sample_slot_requests(&c, 5, 3, RequestCountLaw::Poisson { mean: 6.0 }, t, &mut rng);
            assert!(b.per_user.iter().all(|s| s.len() <= 3));
        }
    }

    #[test]
    fn distinct_draws_cover_whole_catalog() {
        let c = build_catalog(8, 3.0).unwrap();
        let mut rng = SimRng::seed_from_u64(1);
        let mut d = c.draw_distinct(8, &mut rng);
        d.sort();
        assert_eq!(d, c.contents().collect::<Vec<_>>());
    }

    #[test]
    fn trace_rows_are_sorted() {
        let c = build_catalog(30, 1.0).unwrap();
        let t = generate_trace(&c, 4, 5, RequestCountLaw::Poisson { mean: 2.0 }, 20, 5);
        let text = t.to_text().unwrap();
        let rows: Vec<(u64, u64, u64)> = text
            .lines()
            .filter(|l| !l.starts_with('#'))
            .map(|l| {
                let v: Vec<u64> = l.split(',').map(|x| x.parse().unwrap()).collect();
                (v[0], v[1], v[2])
            })
            .collect();
        assert!(rows.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn parse_errors_name_the_line() {
        let p = Path::new("t.csv");
        let head = "# catalog_size=10\n# users=2\n# cache_capacity=3\n# zipf=1\n# seed=0\n# slots=2\n";
        let bad_content = format!("{head}0,0,11\n");
        match Trace::parse(&bad_content, p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 7),
            other => panic!("unexpected {other:?}"),
        }
        let malformed = format!("{head}0,0\n");
        assert!(matches!(Trace::parse(&malformed, p), Err(Error::Parse { line: 7, .. })));
        let unsorted = format!("{head}1,0,1\n0,0,1\n");
        assert!(matches!(Trace::parse(&unsorted, p), Err(Error::Parse { line: 8, .. })));
        let missing = "# catalog_size=10\n";
        assert!(Trace::parse(missing, p).is_err());
        let unknown = format!("{head}# extra=1\n");
        assert!(matches!(Trace::parse(&unknown, p), Err(Error::Parse { line: 7, .. })));
    }
}
