//! Tweet classification and the per-country-period Twitter outcomes.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDateTime, Utc};
use rayon::prelude::*;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::panel::{build_panel, CellCount, PanelLayout, PanelSeries, PeriodCalendar, PeriodRange, Transform};

pub const USERS: &str = "users";
pub const NEW_ACCOUNTS: &str = "new_accounts";
pub const INFREQUENT_USERS: &str = "infrequent_users";
pub const NOT_APPLE_USERS: &str = "not_apple_users";
pub const STUDENT_USERS: &str = "student_users";
pub const ACTIVIST_USERS: &str = "activist_users";
pub const POLITICAL_USERS: &str = "political_users";
pub const TWEETS: &str = "tweets";
pub const COLLECTIVE_TWEETS: &str = "collective_tweets";
pub const POLITICAL_TWEETS: &str = "political_tweets";
pub const PROP_COLLECTIVE_USERS: &str = "prop_collective_users";
pub const PROP_COLLECTIVE_TWEETS: &str = "prop_collective_tweets";
pub const TAX_MENTION_SHARE: &str = "tax_mention_share";

/// Every outcome produced by [`twitter_outcomes`], in output order.
pub const TWITTER_OUTCOMES: [&str; 13] = [
    USERS,
    NEW_ACCOUNTS,
    INFREQUENT_USERS,
    NOT_APPLE_USERS,
    STUDENT_USERS,
    ACTIVIST_USERS,
    POLITICAL_USERS,
    TWEETS,
    COLLECTIVE_TWEETS,
    POLITICAL_TWEETS,
    PROP_COLLECTIVE_USERS,
    PROP_COLLECTIVE_TWEETS,
    TAX_MENTION_SHARE,
];

/// Ratios are analysed in levels; everything else is a count.
pub fn is_proportion(outcome: &str) -> bool {
    matches!(
        outcome,
        PROP_COLLECTIVE_USERS | PROP_COLLECTIVE_TWEETS | TAX_MENTION_SHARE
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct TweetRecord {
    pub tweet_id: String,
    pub user_id: String,
    pub timestamp: DateTime<Utc>,
    pub country_code: String,
    pub text: String,
    pub source: String,
    pub user_created_at: DateTime<Utc>,
    pub statuses_count: u64,
    pub user_description: String,
    pub user_location: String,
    pub user_lang: String,
    pub tweet_lang: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LexiconKind {
    Collective,
    Political,
    Bot,
    AppleSource,
    Student,
}

impl LexiconKind {
    pub const ALL: [LexiconKind; 5] = [
        LexiconKind::Collective,
        LexiconKind::Political,
        LexiconKind::Bot,
        LexiconKind::AppleSource,
        LexiconKind::Student,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LexiconKind::Collective => "collective",
            LexiconKind::Political => "political",
            LexiconKind::Bot => "bot",
            LexiconKind::AppleSource => "apple-source",
            LexiconKind::Student => "student",
        }
    }

    fn builtin_text(self) -> &'static str {
        match self {
            LexiconKind::Collective => include_str!("../lexicons/collective.txt"),
            LexiconKind::Political => include_str!("../lexicons/political.txt"),
            LexiconKind::Bot => include_str!("../lexicons/bot.txt"),
            LexiconKind::AppleSource => include_str!("../lexicons/apple-source.txt"),
            LexiconKind::Student => include_str!("../lexicons/student.txt"),
        }
    }
}

/// An ordered list of lowercase phrases. Leading and trailing spaces are part
/// of a phrase.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhraseLexicon {
    pub kind: LexiconKind,
    pub phrases: Vec<String>,
}

impl PhraseLexicon {
    /// Parses the one-phrase-per-line format. Lines starting with `#` are
    /// comments and empty lines are skipped; nothing else is trimmed.
    pub fn parse(kind: LexiconKind, text: &str) -> Result<Self> {
        let mut phrases = Vec::new();
        for line in text.lines() {
            let line = line.strip_suffix('\r').unwrap_or(line);
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line.chars().any(|c| c.is_ascii_uppercase()) {
                return Err(Error::Config(format!(
                    "{} lexicon phrase {line:?} is not lowercase",
                    kind.name()
                )));
            }
            phrases.push(line.to_string());
        }
        if phrases.is_empty() {
            return Err(Error::Config(format!("{} lexicon is empty", kind.name())));
        }
        Ok(Self { kind, phrases })
    }

    pub fn builtin(kind: LexiconKind) -> Self {
        Self::parse(kind, kind.builtin_text()).expect("shipped lexicons parse")
    }

    pub fn matches(&self, text: &str) -> bool {
        match_phrases(text, self)
    }
}

/// True when the ASCII-lowercased text contains any phrase verbatim.
pub fn match_phrases(text: &str, lexicon: &PhraseLexicon) -> bool {
    if text.is_empty() {
        return false;
    }
    let lowered = text.to_ascii_lowercase();
    lexicon.phrases.iter().any(|p| lowered.contains(p.as_str()))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicons {
    pub collective: PhraseLexicon,
    pub political: PhraseLexicon,
    pub bot: PhraseLexicon,
    pub apple_source: PhraseLexicon,
    pub student: PhraseLexicon,
}

impl Lexicons {
    pub fn builtin() -> Self {
        Self::from_parts(|k| Ok(PhraseLexicon::builtin(k))).expect("shipped lexicons are valid")
    }

    /// Loads `<kind>.txt` for each lexicon from `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        Self::from_parts(|k| {
            let path = dir.join(format!("{}.txt", k.name()));
            let text =
                fs::read_to_string(&path).map_err(|e| Error::Config(format!("reading {}: {e}", path.display())))?;
            PhraseLexicon::parse(k, &text)
        })
    }

    fn from_parts(mut load: impl FnMut(LexiconKind) -> Result<PhraseLexicon>) -> Result<Self> {
        let lex = Self {
            collective: load(LexiconKind::Collective)?,
            political: load(LexiconKind::Political)?,
            bot: load(LexiconKind::Bot)?,
            apple_source: load(LexiconKind::AppleSource)?,
            student: load(LexiconKind::Student)?,
        };
        let collective: BTreeSet<&String> = lex.collective.phrases.iter().collect();
        if let Some(shared) = lex.political.phrases.iter().find(|p| collective.contains(p)) {
            return Err(Error::Config(format!(
                "phrase {shared:?} appears in both collective and political lexicons"
            )));
        }
        Ok(lex)
    }
}

impl Default for Lexicons {
    fn default() -> Self {
        Self::builtin()
    }
}

/// Drops tweets whose author description matches the bot lexicon.
pub fn bot_filter(records: Vec<TweetRecord>, lex: &Lexicons) -> Vec<TweetRecord> {
    records
        .into_iter()
        .filter(|r| !lex.bot.matches(&r.user_description))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Flags {
    pub active: bool,
    pub new_account: bool,
    pub infrequent: bool,
    pub not_apple: bool,
    pub student: bool,
    pub activist: bool,
    pub political: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserPeriodFlags {
    pub user_id: String,
    pub country_code: String,
    pub period: i64,
    pub flags: Flags,
}

/// Per-tweet classification, computed once and reused by flags and outcomes.
#[derive(Debug, Clone, Copy, Default)]
struct TweetClass {
    period: i64,
    collective: bool,
    political: bool,
    apple: bool,
    student: bool,
    tax: bool,
}

fn classify_all(records: &[TweetRecord], lex: &Lexicons, cal: &PeriodCalendar) -> Result<Vec<TweetClass>> {
    records
        .par_iter()
        .map(|r| {
            let period = cal.period_of_date(r.timestamp.date_naive())?;
            let collective = lex.collective.matches(&r.text);
            Ok(TweetClass {
                period,
                collective,
                political: lex.political.matches(&r.text),
                apple: lex.apple_source.matches(&r.source),
                student: lex.student.matches(&r.user_description) || lex.student.matches(&r.user_location),
                tax: collective && r.text.to_ascii_lowercase().contains("tax"),
            })
        })
        .collect()
}

/// Fewer than one status per whole day of account age at the time of the tweet.
fn tweets_less_than_daily(r: &TweetRecord) -> bool {
    let days = (r.timestamp - r.user_created_at).num_days().max(1);
    (r.statuses_count as f64) / (days as f64) < 1.0
}

/// Per (user, country, period) flags. Expects bot-filtered records.
pub fn user_period_flags(
    records: &[TweetRecord],
    lex: &Lexicons,
    cal: &PeriodCalendar,
) -> Result<Vec<UserPeriodFlags>> {
    let classes = classify_all(records, lex, cal)?;
    flags_from_classes(records, &classes, cal)
}

fn flags_from_classes(
    records: &[TweetRecord],
    classes: &[TweetClass],
    cal: &PeriodCalendar,
) -> Result<Vec<UserPeriodFlags>> {
    // first appearance of each user decides the infrequent flag
    let mut first: BTreeMap<&str, &TweetRecord> = BTreeMap::new();
    for r in records {
        first
            .entry(r.user_id.as_str())
            .and_modify(|cur| {
                if (r.timestamp, &r.tweet_id) < (cur.timestamp, &cur.tweet_id) {
                    *cur = r;
                }
            })
            .or_insert(r);
    }
    let infrequent: BTreeMap<&str, bool> = first.iter().map(|(u, r)| (*u, tweets_less_than_daily(r))).collect();

    let mut cells: BTreeMap<(&str, &str, i64), Flags> = BTreeMap::new();
    for (r, c) in records.iter().zip(classes) {
        let created = cal.period_of_date(r.user_created_at.date_naive())?;
        let f = cells
            .entry((r.user_id.as_str(), r.country_code.as_str(), c.period))
            .or_insert_with(|| Flags {
                active: true,
                new_account: created == c.period,
                infrequent: infrequent[r.user_id.as_str()],
                not_apple: true,
                ..Flags::default()
            });
        f.not_apple &= !c.apple;
        f.student |= c.student;
        f.activist |= c.collective;
        f.political |= c.political;
    }
    Ok(cells
        .into_iter()
        .map(|((u, cc, t), flags)| UserPeriodFlags {
            user_id: u.to_string(),
            country_code: cc.to_string(),
            period: t,
            flags,
        })
        .collect())
}

/// Level panels for every Twitter outcome over a shared layout.
#[derive(Debug, Clone, PartialEq)]
pub struct TwitterOutcomes {
    pub panels: BTreeMap<String, PanelSeries>,
    /// Cells of proportion outcomes whose denominator was zero (reported as 0).
    pub undefined_cells: BTreeMap<String, Vec<(String, i64)>>,
}

impl TwitterOutcomes {
    pub fn get(&self, outcome: &str) -> Result<&PanelSeries> {
        self.panels
            .get(outcome)
            .ok_or_else(|| Error::Config(format!("unknown twitter outcome {outcome:?}")))
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct CellTally {
    users: u64,
    new_accounts: u64,
    infrequent: u64,
    not_apple: u64,
    student: u64,
    activist: u64,
    political_users: u64,
    tweets: u64,
    collective: u64,
    political_tweets: u64,
    tax: u64,
}

type CountOf = fn(&CellTally) -> u64;
type RatioOf = fn(&CellTally) -> (u64, u64);

/// Computes every Twitter outcome. Records should already be bot-filtered.
pub fn twitter_outcomes(
    records: &[TweetRecord],
    lex: &Lexicons,
    cal: &PeriodCalendar,
    layout: &PanelLayout,
) -> Result<TwitterOutcomes> {
    let classes = classify_all(records, lex, cal)?;
    let flags = flags_from_classes(records, &classes, cal)?;

    let mut tally: BTreeMap<(String, i64), CellTally> = BTreeMap::new();
    for f in &flags {
        let t = tally.entry((f.country_code.clone(), f.period)).or_default();
        t.users += 1;
        t.new_accounts += f.flags.new_account as u64;
        t.infrequent += f.flags.infrequent as u64;
        t.not_apple += f.flags.not_apple as u64;
        t.student += f.flags.student as u64;
        t.activist += f.flags.activist as u64;
        t.political_users += f.flags.political as u64;
    }
    for (r, c) in records.iter().zip(&classes) {
        let t = tally.entry((r.country_code.clone(), c.period)).or_default();
        t.tweets += 1;
        t.collective += c.collective as u64;
        t.political_tweets += c.political as u64;
        t.tax += c.tax as u64;
    }

    let range = match layout.range {
        Some(r) => Some(r),
        None => {
            let lo = tally.keys().map(|(_, t)| *t).min();
            let hi = tally.keys().map(|(_, t)| *t).max();
            lo.zip(hi).map(|(lo, hi)| PeriodRange { first: lo, last: hi })
        }
    };
    let countries = layout.countries.clone().unwrap_or_else(|| {
        tally
            .keys()
            .map(|(c, _)| c.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    });
    let layout = PanelLayout {
        countries: Some(countries),
        range,
    };

    let mut panels = BTreeMap::new();
    let mut undefined_cells = BTreeMap::new();
    let counts: [(&str, CountOf); 10] = [
        (USERS, |t| t.users),
        (NEW_ACCOUNTS, |t| t.new_accounts),
        (INFREQUENT_USERS, |t| t.infrequent),
        (NOT_APPLE_USERS, |t| t.not_apple),
        (STUDENT_USERS, |t| t.student),
        (ACTIVIST_USERS, |t| t.activist),
        (POLITICAL_USERS, |t| t.political_users),
        (TWEETS, |t| t.tweets),
        (COLLECTIVE_TWEETS, |t| t.collective),
        (POLITICAL_TWEETS, |t| t.political_tweets),
    ];
    for (name, get) in counts {
        let cells = tally
            .iter()
            .map(|((c, t), v)| CellCount::new(c.clone(), *t, get(v) as f64));
        panels.insert(name.to_string(), build_panel(name, cells, &layout, Transform::Level)?);
    }

    let ratios: [(&str, RatioOf); 3] = [
        (PROP_COLLECTIVE_USERS, |t| (t.activist, t.users)),
        (PROP_COLLECTIVE_TWEETS, |t| (t.collective, t.tweets)),
        (TAX_MENTION_SHARE, |t| (t.tax, t.collective)),
    ];
    for (name, get) in ratios {
        let cells = tally.iter().filter_map(|((c, t), v)| {
            let (num, den) = get(v);
            (den > 0).then(|| CellCount::new(c.clone(), *t, num as f64 / den as f64))
        });
        let panel = build_panel(name, cells, &layout, Transform::Level)?;
        let mut undefined = Vec::new();
        for (c, _) in panel.rows() {
            for t in panel.periods() {
                if tally.get(&(c.to_string(), t)).is_none_or(|v| get(v).1 == 0) {
                    undefined.push((c.to_string(), t));
                }
            }
        }
        undefined.sort();
        undefined_cells.insert(name.to_string(), undefined);
        panels.insert(name.to_string(), panel);
    }

    Ok(TwitterOutcomes {
        panels,
        undefined_cells,
    })
}

#[derive(Debug, Deserialize)]
struct RawTweet {
    tweet_id: String,
    user_id: String,
    timestamp: String,
    country_code: String,
    text: String,
    source: String,
    user_created_at: String,
    statuses_count: Option<String>,
    user_description: String,
    user_location: String,
    user_lang: String,
    tweet_lang: String,
}

pub(crate) fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.with_timezone(&Utc));
    }
    ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S%.f"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .map(|n| n.and_utc())
}

pub(crate) fn normalize_country(code: &str) -> Option<String> {
    let code = code.trim();
    (code.len() == 2 && code.bytes().all(|b| b.is_ascii_alphabetic())).then(|| code.to_ascii_uppercase())
}

pub const TWEET_HEADER: [&str; 12] = [
    "tweet_id",
    "user_id",
    "timestamp",
    "country_code",
    "text",
    "source",
    "user_created_at",
    "statuses_count",
    "user_description",
    "user_location",
    "user_lang",
    "tweet_lang",
];

/// Reads the tweet CSV. `path` is used only for error messages.
pub fn read_tweets<R: Read>(reader: R, path: &Path) -> Result<Vec<TweetRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let schema = |line: u64, message: String| Error::Schema {
        path: PathBuf::from(path),
        line,
        message,
    };
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(TWEET_HEADER.iter().copied()) {
        return Err(schema(1, format!("expected header {}", TWEET_HEADER.join(","))));
    }
    let mut out = Vec::new();
    for row in rdr.deserialize::<RawTweet>() {
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                return Err(schema(line, e.to_string()));
            }
        };
        let line = out.len() as u64 + 2;
        let timestamp = parse_timestamp(&row.timestamp)
            .ok_or_else(|| schema(line, format!("bad timestamp {:?}", row.timestamp)))?;
        let user_created_at = parse_timestamp(&row.user_created_at)
            .ok_or_else(|| schema(line, format!("bad user_created_at {:?}", row.user_created_at)))?;
        let statuses_count = row
            .statuses_count
            .as_deref()
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| schema(line, "missing statuses_count".into()))?
            .parse::<u64>()
            .map_err(|e| schema(line, format!("bad statuses_count: {e}")))?;
        let country_code = normalize_country(&row.country_code)
            .ok_or_else(|| schema(line, format!("bad country code {:?}", row.country_code)))?;
        if timestamp < user_created_at {
            return Err(schema(line, "tweet predates account creation".into()));
        }
        out.push(TweetRecord {
            tweet_id: row.tweet_id,
            user_id: row.user_id,
            timestamp,
            country_code,
            text: row.text,
            source: row.source,
            user_created_at,
            statuses_count,
            user_description: row.user_description,
            user_location: row.user_location,
            user_lang: row.user_lang,
            tweet_lang: row.tweet_lang,
        });
    }
    Ok(out)
}

pub fn read_tweets_file(path: &Path) -> Result<Vec<TweetRecord>> {
    let file = fs::File::open(path)?;
    read_tweets(std::io::BufReader::new(file), path)
}

/// Writes records in the format [`read_tweets`] accepts.
pub fn write_tweets<W: Write>(records: &[TweetRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TWEET_HEADER)?;
    let fmt = |t: &DateTime<Utc>| t.format("%Y-%m-%dT%H:%M:%SZ").to_string();
    for r in records {
        w.write_record([
            r.tweet_id.as_str(),
            &r.user_id,
            &fmt(&r.timestamp),
            &r.country_code,
            &r.text,
            &r.source,
            &fmt(&r.user_created_at),
            &r.statuses_count.to_string(),
            &r.user_description,
            &r.user_location,
            &r.user_lang,
            &r.tweet_lang,
        ])?;
    }
    w.flush()?;
    Ok(())
}
