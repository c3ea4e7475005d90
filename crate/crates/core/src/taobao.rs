//! Processed Taobao user-behavior format: parsing, conversion from raw
//! events, and train/test window sampling.
//!
//! One record per line:
//!
//! ```text
//! <user> <item> <category> <label> <items> <categories> <rand items> <rand categories>
//! ```
//!
//! where each of the last four fields is a comma-separated list of exactly
//! [`HISTORY_LEN`] ids. Short histories are padded with `0` in front.
//!
//! ```
//! use tbsm::taobao::{parse_line, HISTORY_LEN};
//!
//! let zeros = vec!["0"; HISTORY_LEN].join(",");
//! let line = format!("7 123 50 1 {zeros} {zeros} {zeros} {zeros}");
//! let rec = parse_line(&line, 1).unwrap();
//! assert_eq!((rec.user, rec.item, rec.category, rec.label), (7, 123, 50, 1));
//! assert_eq!(rec.to_line(), line);
//! ```

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};

use crate::dataset::EventPoint;
use crate::embedding::{Event, PADDING_ID};
use crate::error::{Error, Result};

/// Entries per id list.
pub const HISTORY_LEN: usize = 200;

const LIST_NAMES: [&str; 4] = ["items", "categories", "rand items", "rand categories"];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProcessedUserRecord {
    pub user: u32,
    /// Item and category at the last true position.
    pub item: u32,
    pub category: u32,
    pub label: u8,
    pub items: Vec<u32>,
    pub categories: Vec<u32>,
    pub rand_items: Vec<u32>,
    pub rand_categories: Vec<u32>,
}

impl ProcessedUserRecord {
    pub fn to_line(&self) -> String {
        let list = |v: &[u32]| v.iter().map(u32::to_string).collect::<Vec<_>>().join(",");
        format!(
            "{} {} {} {} {} {} {} {}",
            self.user,
            self.item,
            self.category,
            self.label,
            list(&self.items),
            list(&self.categories),
            list(&self.rand_items),
            list(&self.rand_categories)
        )
    }

    /// Number of leading padding entries in the true history.
    pub fn padding(&self) -> usize {
        self.items.iter().take_while(|&&i| i == PADDING_ID).count()
    }

    fn validate(&self, line: usize) -> Result<()> {
        let lists = [
            &self.items,
            &self.categories,
            &self.rand_items,
            &self.rand_categories,
        ];
        for (v, name) in lists.iter().zip(LIST_NAMES) {
            if v.len() != HISTORY_LEN {
                return Err(Error::Parse {
                    line,
                    column: 0,
                    message: format!(
                        "{name} list has {} entries, expected {HISTORY_LEN}",
                        v.len()
                    ),
                });
            }
        }
        if self.label > 1 {
            return Err(Error::Parse {
                line,
                column: 0,
                message: format!("label {} is not 0 or 1", self.label),
            });
        }
        Ok(())
    }
}

/// Parses one record; `line` is the 1-based line number used in errors.
pub fn parse_line(text: &str, line: usize) -> Result<ProcessedUserRecord> {
    let fields: Vec<(usize, &str)> = text
        .split_whitespace()
        .map(|f| (f.as_ptr() as usize - text.as_ptr() as usize + 1, f))
        .collect();
    if fields.len() != 8 {
        return Err(Error::Parse {
            line,
            column: fields.get(8).map_or(text.len() + 1, |f| f.0),
            message: format!("expected 8 fields, found {}", fields.len()),
        });
    }
    let id = |(column, tok): (usize, &str), what: &str| {
        tok.parse::<u32>().map_err(|_| Error::Parse {
            line,
            column,
            message: format!("{what}: {tok:?} is not a non-negative integer"),
        })
    };
    let list = |(column, tok): (usize, &str), what: &str| -> Result<Vec<u32>> {
        let mut out = Vec::with_capacity(HISTORY_LEN);
        let mut col = column;
        for part in tok.split(',') {
            out.push(id((col, part), what)?);
            col += part.len() + 1;
        }
        if out.len() != HISTORY_LEN {
            return Err(Error::Parse {
                line,
                column,
                message: format!(
                    "{what} list has {} entries, expected {HISTORY_LEN}",
                    out.len()
                ),
            });
        }
        Ok(out)
    };
    let label = id(fields[3], "label")?;
    if label > 1 {
        return Err(Error::Parse {
            line,
            column: fields[3].0,
            message: format!("label {label} is not 0 or 1"),
        });
    }
    Ok(ProcessedUserRecord {
        user: id(fields[0], "user")?,
        item: id(fields[1], "item")?,
        category: id(fields[2], "category")?,
        label: label as u8,
        items: list(fields[4], LIST_NAMES[0])?,
        categories: list(fields[5], LIST_NAMES[1])?,
        rand_items: list(fields[6], LIST_NAMES[2])?,
        rand_categories: list(fields[7], LIST_NAMES[3])?,
    })
}

/// Parses every non-blank line; stops at the first error.
pub fn read_processed<R: BufRead>(reader: R) -> Result<Vec<ProcessedUserRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<processed input>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_line(&line, i + 1)?);
    }
    Ok(out)
}

pub fn write_processed<W: Write>(mut w: W, records: &[ProcessedUserRecord]) -> Result<()> {
    for (i, r) in records.iter().enumerate() {
        r.validate(i + 1)?;
        writeln!(w, "{}", r.to_line()).map_err(|e| Error::io("<processed output>", e))?;
    }
    w.flush().map_err(|e| Error::io("<processed output>", e))
}

/// One raw interaction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RawEvent {
    pub user: u32,
    pub item: u32,
    pub category: u32,
    pub timestamp: i64,
}

/// Reads delimited raw events: `user,item,category,timestamp`, or the
/// five-column `user,item,category,behavior,timestamp`. A non-numeric first
/// row is taken as a header.
pub fn read_raw<R: std::io::Read>(reader: R) -> Result<Vec<RawEvent>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 1;
        if i == 0 && rec.get(0).is_some_and(|f| f.parse::<u64>().is_err()) {
            continue;
        }
        let ts_col = match rec.len() {
            4 => 3,
            5 => 4,
            n => {
                return Err(Error::Parse {
                    line,
                    column: 0,
                    message: format!("expected 4 or 5 columns, found {n}"),
                })
            }
        };
        let field = |c: usize| rec.get(c).unwrap_or_default();
        let num = |c: usize| -> Result<u32> {
            let f = field(c);
            f.parse().map_err(|_| Error::Parse {
                line,
                column: c + 1,
                message: format!("{f:?} is not a non-negative integer id"),
            })
        };
        let ts = field(ts_col);
        out.push(RawEvent {
            user: num(0)?,
            item: num(1)?,
            category: num(2)?,
            timestamp: ts.parse().map_err(|_| Error::Parse {
                line,
                column: ts_col + 1,
                message: format!("{ts:?} is not an integer timestamp"),
            })?,
        });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConvertStats {
    pub users: usize,
    pub records: usize,
    /// Raw rows with a reserved zero id.
    pub rejected_rows: usize,
    /// Users with no item outside their own history to draw negatives from.
    pub skipped_users: usize,
    pub truncated: usize,
    pub padded: usize,
}

/// Groups raw events per user (ascending id), sorts each history by time
/// (stable on ties), keeps the most recent [`HISTORY_LEN`] events and draws
/// random negatives from the distinct items seen anywhere in the input,
/// excluding the user's own. A coin flip sets the label; on label 0 the
/// last true position is replaced by the last random pair.
pub fn raw_to_processed(
    events: &[RawEvent],
    seed: u64,
) -> (Vec<ProcessedUserRecord>, ConvertStats) {
    let mut stats = ConvertStats::default();
    let mut per_user: BTreeMap<u32, Vec<RawEvent>> = BTreeMap::new();
    let mut pool: BTreeMap<u32, u32> = BTreeMap::new();
    for ev in events {
        if ev.user == PADDING_ID || ev.item == PADDING_ID || ev.category == PADDING_ID {
            stats.rejected_rows += 1;
            continue;
        }
        per_user.entry(ev.user).or_default().push(*ev);
        pool.entry(ev.item).or_insert(ev.category);
    }
    let pool: Vec<(u32, u32)> = pool.into_iter().collect();
    stats.users = per_user.len();

    let mut records = Vec::with_capacity(per_user.len());
    for (user, mut hist) in per_user {
        hist.sort_by_key(|e| e.timestamp);
        let own: HashSet<u32> = hist.iter().map(|e| e.item).collect();
        if own.len() >= pool.len() {
            stats.skipped_users += 1;
            continue;
        }
        if hist.len() > HISTORY_LEN {
            stats.truncated += 1;
            hist.drain(..hist.len() - HISTORY_LEN);
        } else if hist.len() < HISTORY_LEN {
            stats.padded += 1;
        }
        let pad = HISTORY_LEN - hist.len();
        let mut items = vec![PADDING_ID; pad];
        let mut categories = vec![PADDING_ID; pad];
        items.extend(hist.iter().map(|e| e.item));
        categories.extend(hist.iter().map(|e| e.category));

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(user as u64);
        let mut rand_items = Vec::with_capacity(HISTORY_LEN);
        let mut rand_categories = Vec::with_capacity(HISTORY_LEN);
        while rand_items.len() < HISTORY_LEN {
            let (i, c) = pool[rng.random_range(0..pool.len())];
            if !own.contains(&i) {
                rand_items.push(i);
                rand_categories.push(c);
            }
        }
        let label = u8::from(rng.random_bool(0.5));
        if label == 0 {
            items[HISTORY_LEN - 1] = rand_items[HISTORY_LEN - 1];
            categories[HISTORY_LEN - 1] = rand_categories[HISTORY_LEN - 1];
        }
        records.push(ProcessedUserRecord {
            user,
            item: items[HISTORY_LEN - 1],
            category: categories[HISTORY_LEN - 1],
            label,
            items,
            categories,
            rand_items,
            rand_categories,
        });
    }
    stats.records = records.len();
    (records, stats)
}

/// `τ` equally spaced times from 0 to 1 inclusive; `[0]` when `τ = 1`.
pub fn time_grid(tau: usize) -> Vec<f64> {
    match tau {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..tau).map(|j| j as f64 / (tau - 1) as f64).collect(),
    }
}

/// Overwrites event times with [`time_grid`].
pub fn attach_time(events: &mut [Event]) {
    let grid = time_grid(events.len());
    for (e, t) in events.iter_mut().zip(grid) {
        e.time = t;
    }
}

/// A sampled training window and where it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainWindow {
    /// 0-based offset into the record's lists.
    pub start: usize,
    /// Index into the random lists used for the last position, if negative.
    pub rand_index: Option<usize>,
    pub point: EventPoint,
}

fn window(rec: &ProcessedUserRecord, start: usize, tau: usize, label: u8) -> EventPoint {
    let mut events: Vec<Event> = (start..start + tau)
        .map(|p| Event {
            user: rec.user,
            item: rec.items[p],
            category: rec.categories[p],
            time: 0.0,
            label: 1,
        })
        .collect();
    attach_time(&mut events);
    events.last_mut().expect("tau >= 1").label = label;
    EventPoint { events, label }
}

fn check_tau(tau: usize) -> Result<()> {
    if tau == 0 || tau > HISTORY_LEN {
        return Err(Error::Config(format!(
            "tau must be in [1, {HISTORY_LEN}], got {tau}"
        )));
    }
    Ok(())
}

/// `positives` true windows (label 1) and `negatives` windows with the last
/// pair swapped for a random one (label 0). The `j`-th negative shares its
/// start with the `j`-th positive.
pub fn make_train_points<R: Rng + ?Sized>(
    rec: &ProcessedUserRecord,
    tau: usize,
    positives: usize,
    negatives: usize,
    rng: &mut R,
) -> Result<Vec<TrainWindow>> {
    check_tau(tau)?;
    let mut out = Vec::with_capacity(positives + negatives);
    for j in 0..positives.max(negatives) {
        let start = rng.random_range(0..=HISTORY_LEN - tau);
        if j < positives {
            out.push(TrainWindow {
                start,
                rand_index: None,
                point: window(rec, start, tau, 1),
            });
        }
        if j < negatives {
            let r = rng.random_range(0..HISTORY_LEN);
            let mut point = window(rec, start, tau, 0);
            let last = point.events.last_mut().expect("tau >= 1");
            last.item = rec.rand_items[r];
            last.category = rec.rand_categories[r];
            out.push(TrainWindow {
                start,
                rand_index: Some(r),
                point,
            });
        }
    }
    Ok(out)
}

/// The last `τ` positions with the record's label.
pub fn make_test_point(rec: &ProcessedUserRecord, tau: usize) -> Result<EventPoint> {
    check_tau(tau)?;
    Ok(window(rec, HISTORY_LEN - tau, tau, rec.label))
}

/// Train windows of every record, each record on its own random stream.
pub fn sample_train(
    records: &[ProcessedUserRecord],
    tau: usize,
    positives: usize,
    negatives: usize,
    seed: u64,
) -> Result<Vec<EventPoint>> {
    let mut out = Vec::with_capacity(records.len() * (positives + negatives));
    for (i, rec) in records.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        out.extend(
            make_train_points(rec, tau, positives, negatives, &mut rng)?
                .into_iter()
                .map(|w| w.point),
        );
    }
    Ok(out)
}

/// Shape of a generated raw corpus with per-user category preferences and
/// skewed item popularity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RawCorpusConfig {
    pub users: usize,
    pub categories: usize,
    pub items_per_category: usize,
    pub favorites: usize,
    /// Probability that an event comes from a favorite category.
    pub affinity: f64,
    /// Zipf exponent of item popularity within a category; 0 is uniform.
    pub popularity: f64,
    pub min_events: usize,
    pub max_events: usize,
    pub seed: u64,
}

impl Default for RawCorpusConfig {
    fn default() -> Self {
        RawCorpusConfig {
            users: 5_000,
            categories: 50,
            items_per_category: 40,
            favorites: 3,
            affinity: 0.9,
            popularity: 1.0,
            min_events: 200,
            max_events: 400,
            seed: 7,
        }
    }
}

/// Raw events where each user mostly browses a few favorite categories and
/// low item indices are the most popular.
/// Item `j` of category `c` (both 0-based) has id `c·m + j + 1`; category
/// ids start at 1.
pub fn generate_raw_corpus(cfg: &RawCorpusConfig) -> Result<Vec<RawEvent>> {
    if cfg.categories < cfg.favorites || cfg.favorites == 0 || cfg.items_per_category == 0 {
        return Err(Error::Config(
            "raw corpus needs 0 < favorites <= categories".into(),
        ));
    }
    if cfg.min_events == 0 || cfg.min_events > cfg.max_events {
        return Err(Error::Config(
            "raw corpus needs 0 < min_events <= max_events".into(),
        ));
    }
    if cfg.popularity.is_nan() || cfg.popularity < 0.0 {
        return Err(Error::Config(format!(
            "popularity exponent {} must be non-negative",
            cfg.popularity
        )));
    }
    let zipf = Zipf::new(cfg.items_per_category as f64, cfg.popularity)
        .map_err(|e| Error::Config(format!("popularity: {e}")))?;
    let mut out = Vec::new();
    for u in 0..cfg.users {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(u as u64);
        let favs = rand::seq::index::sample(&mut rng, cfg.categories, cfg.favorites).into_vec();
        let len = rng.random_range(cfg.min_events..=cfg.max_events);
        let mut ts = rng.random_range(1_500_000_000i64..1_500_100_000);
        for _ in 0..len {
            let c = if rng.random_bool(cfg.affinity) {
                favs[rng.random_range(0..favs.len())]
            } else {
                rng.random_range(0..cfg.categories)
            };
            let j = zipf.sample(&mut rng) as usize - 1;
            ts += rng.random_range(1..600);
            out.push(RawEvent {
                user: u as u32 + 1,
                item: (c * cfg.items_per_category + j + 1) as u32,
                category: c as u32 + 1,
                timestamp: ts,
            });
        }
    }
    Ok(out)
}

pub fn write_raw<W: Write>(w: W, events: &[RawEvent]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for e in events {
        wr.write_record([
            e.user.to_string(),
            e.item.to_string(),
            e.category.to_string(),
            e.timestamp.to_string(),
        ])?;
    }
    wr.flush().map_err(|e| Error::io("<raw output>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(n_true: usize) -> ProcessedUserRecord {
        let pad = HISTORY_LEN - n_true;
        let items: Vec<u32> = (0..HISTORY_LEN)
            .map(|p| if p < pad { 0 } else { p as u32 + 1 })
            .collect();
        let categories: Vec<u32> = items
            .iter()
            .map(|i| if *i == 0 { 0 } else { i % 7 + 1 })
            .collect();
        ProcessedUserRecord {
            user: 3,
            item: items[HISTORY_LEN - 1],
            category: categories[HISTORY_LEN - 1],
            label: 1,
            items,
            categories,
            rand_items: (1000..1200).collect(),
            rand_categories: (0..200).map(|i| i % 5 + 20).collect(),
        }
    }

    #[test]
    fn time_grid_values() {
        assert_eq!(time_grid(2), vec![0.0, 1.0]);
        assert_eq!(time_grid(5), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(time_grid(1), vec![0.0]);
        let g = time_grid(20);
        assert_eq!((g[0], g[19]), (0.0, 1.0));
        for w in g.windows(2) {
            assert!((w[1] - w[0] - 1.0 / 19.0).abs() < 1e-15);
        }
    }

    #[test]
    fn short_list_is_rejected_with_name() {
        let rec = record(200);
        let mut fields: Vec<String> = rec.to_line().split(' ').map(str::to_string).collect();
        fields[5] = fields[5].rsplit_once(',').unwrap().0.to_string();
        let line = fields.join(" ");
        match parse_line(&line, 4).unwrap_err() {
            Error::Parse { line, message, .. } => {
                assert_eq!(line, 4);
                assert!(message.contains("categories list has 199"), "{message}");
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn bad_token_column() {
        let rec = record(5);
        let line = rec.to_line().replacen("3 ", "3x ", 1);
        match parse_line(&line, 2).unwrap_err() {
            Error::Parse { column, .. } => assert_eq!(column, 1),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn windows_are_contiguous_and_twins_differ_at_last() {
        let rec = record(150);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = make_train_points(&rec, 20, 1, 1, &mut rng).unwrap();
        let (pos, neg) = (&w[0], &w[1]);
        assert_eq!(pos.start, neg.start);
        for (j, e) in pos.point.events.iter().enumerate() {
            assert_eq!(e.item, rec.items[pos.start + j]);
        }
        for j in 0..19 {
            assert_eq!(pos.point.events[j], neg.point.events[j]);
        }
        let r = neg.rand_index.unwrap();
        assert_eq!(neg.point.events[19].item, rec.rand_items[r]);
        assert_eq!((pos.point.label, neg.point.label), (1, 0));
    }

    #[test]
    fn full_length_window_and_suffix_test_point() {
        let rec = record(199);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for w in make_train_points(&rec, 200, 3, 0, &mut rng).unwrap() {
            assert_eq!(w.start, 0);
        }
        let t = make_test_point(&rec, 1).unwrap();
        assert_eq!(t.events.len(), 1);
        assert_eq!((t.events[0].item, t.label), (rec.items[199], 1));
        let t = make_test_point(&rec, 200).unwrap();
        assert_eq!(t.events[0].item, 0);
    }

    #[test]
    fn conversion_pads_truncates_and_excludes_own_items() {
        let mut raw = Vec::new();
        for (user, n) in [(1u32, 199usize), (2, 300)] {
            for t in 0..n {
                raw.push(RawEvent {
                    user,
                    item: user * 1000 + t as u32 + 1,
                    category: 1,
                    timestamp: (n - t) as i64,
                });
            }
        }
        raw.push(RawEvent {
            user: 3,
            item: 0,
            category: 1,
            timestamp: 0,
        });
        let (recs, stats) = raw_to_processed(&raw, 11);
        assert_eq!(stats.rejected_rows, 1);
        assert_eq!((stats.padded, stats.truncated), (1, 1));
        assert_eq!(recs[0].padding(), 1);
        // sorted by time: timestamps count down, so items come out reversed
        assert_eq!(recs[1].items[0], 2000 + 200);
        for r in &recs {
            let own: HashSet<u32> = raw
                .iter()
                .filter(|e| e.user == r.user)
                .map(|e| e.item)
                .collect();
            assert!(r.rand_items.iter().all(|i| !own.contains(i)));
            assert_eq!(r.item, r.items[HISTORY_LEN - 1]);
        }
    }
}
