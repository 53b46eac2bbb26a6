//! Challenge-format TSV ingestion and serialization.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{Datelike, NaiveDate, Weekday};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::{
    Dataset, EventLog, GeoPoint, Impression, Interaction, InteractionKind, Item, ItemId, TokenSet, User, UserId,
};
use crate::error::{Error, Result};

pub const USERS_FILE: &str = "users.tsv";
pub const ITEMS_FILE: &str = "items.tsv";
pub const INTERACTIONS_FILE: &str = "interactions.tsv";
pub const IMPRESSIONS_FILE: &str = "impressions.tsv";
pub const TARGET_USERS_FILE: &str = "target_users.tsv";

/// Numeric codes of the `interaction_type` column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KindCodes {
    pub click: u32,
    pub bookmark: u32,
    pub reply: u32,
    pub delete: u32,
}

impl Default for KindCodes {
    fn default() -> Self {
        KindCodes {
            click: 1,
            bookmark: 2,
            reply: 3,
            delete: 4,
        }
    }
}

impl KindCodes {
    pub fn decode(&self, code: u32) -> Option<InteractionKind> {
        match code {
            c if c == self.click => Some(InteractionKind::Click),
            c if c == self.bookmark => Some(InteractionKind::Bookmark),
            c if c == self.reply => Some(InteractionKind::Reply),
            c if c == self.delete => Some(InteractionKind::Delete),
            _ => None,
        }
    }

    pub fn encode(&self, kind: InteractionKind) -> u32 {
        match kind {
            InteractionKind::Click => self.click,
            InteractionKind::Bookmark => self.bookmark,
            InteractionKind::Reply => self.reply,
            InteractionKind::Delete => self.delete,
        }
    }
}

/// What to do with events that reference an unknown user or item.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferencePolicy {
    #[default]
    Drop,
    Fail,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadOptions {
    pub kind_codes: KindCodes,
    pub unknown_references: ReferencePolicy,
}

/// Per-table row counts observed while loading.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub users: usize,
    pub items: usize,
    pub interactions: usize,
    pub impressions: usize,
    pub impression_rows: usize,
    pub target_users: usize,
    pub dropped_interactions: usize,
    pub dropped_impressions: usize,
}

/// Locations of the five input tables.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetPaths {
    pub users: PathBuf,
    pub items: PathBuf,
    pub interactions: PathBuf,
    pub impressions: PathBuf,
    pub target_users: PathBuf,
}

impl DatasetPaths {
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        DatasetPaths {
            users: dir.join(USERS_FILE),
            items: dir.join(ITEMS_FILE),
            interactions: dir.join(INTERACTIONS_FILE),
            impressions: dir.join(IMPRESSIONS_FILE),
            target_users: dir.join(TARGET_USERS_FILE),
        }
    }

    pub fn all(&self) -> [&Path; 5] {
        [
            &self.users,
            &self.items,
            &self.interactions,
            &self.impressions,
            &self.target_users,
        ]
    }
}

pub(crate) fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Data rows of a TSV file: comment lines (`#`) and the header row are skipped.
/// Yields `(1-based line number, fields)`.
pub(crate) fn data_rows(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.starts_with('#') && !l.trim().is_empty())
        .skip(1)
        .map(|(n, l)| (n + 1, l.split('\t').collect()))
}

struct Row<'a> {
    file: &'a str,
    line: usize,
    fields: Vec<&'a str>,
}

impl<'a> Row<'a> {
    fn expect_width(&self, width: usize) -> Result<()> {
        if self.fields.len() < width {
            return Err(Error::parse(
                self.file,
                self.line,
                format!("expected {width} columns, found {}", self.fields.len()),
            ));
        }
        Ok(())
    }

    fn raw(&self, col: usize) -> &'a str {
        self.fields.get(col).map(|s| s.trim()).unwrap_or("")
    }

    fn is_missing(&self, col: usize) -> bool {
        matches!(self.raw(col), "" | "NULL" | "null")
    }

    fn required<T: FromStr>(&self, col: usize, name: &str) -> Result<T> {
        self.raw(col)
            .parse()
            .map_err(|_| Error::parse(self.file, self.line, format!("bad {name} {:?}", self.raw(col))))
    }

    fn optional<T: FromStr>(&self, col: usize, name: &str) -> Result<Option<T>> {
        if self.is_missing(col) {
            Ok(None)
        } else {
            self.required(col, name).map(Some)
        }
    }

    /// Categorical value, unknown = 0.
    fn category(&self, col: usize, name: &str) -> Result<u32> {
        Ok(self.optional(col, name)?.unwrap_or(0))
    }

    fn tokens(&self, col: usize, name: &str) -> Result<TokenSet> {
        self.id_list(col, name).map(TokenSet::new)
    }

    fn id_list(&self, col: usize, name: &str) -> Result<Vec<u32>> {
        if self.is_missing(col) {
            return Ok(Vec::new());
        }
        self.raw(col)
            .split(',')
            .filter(|t| !t.trim().is_empty())
            .map(|t| {
                t.trim()
                    .parse()
                    .map_err(|_| Error::parse(self.file, self.line, format!("bad {name} token {t:?}")))
            })
            .collect()
    }
}

fn rows<'a>(file: &'a str, text: &'a str) -> impl Iterator<Item = Row<'a>> {
    data_rows(text).map(move |(line, fields)| Row { file, line, fields })
}

fn file_label(path: &Path) -> String {
    path.display().to_string()
}

fn parse_users(path: &Path) -> Result<BTreeMap<UserId, User>> {
    let text = read_file(path)?;
    let label = file_label(path);
    let mut users = BTreeMap::new();
    for row in rows(&label, &text) {
        row.expect_width(1)?;
        let user = User {
            id: row.required(0, "user id")?,
            jobroles: row.tokens(1, "jobroles")?,
            career_level: row.category(2, "career_level")?,
            discipline_id: row.category(3, "discipline_id")?,
            industry_id: row.category(4, "industry_id")?,
            country: row.category(5, "country")?,
            region: row.category(6, "region")?,
            experience_n_entries_class: row.category(7, "experience_n_entries_class")?,
            experience_years_experience: row.category(8, "experience_years_experience")?,
            experience_years_in_current: row.category(9, "experience_years_in_current")?,
            edu_degree: row.category(10, "edu_degree")?,
            edu_fieldofstudies: row.tokens(11, "edu_fieldofstudies")?,
        };
        if users.insert(user.id, user).is_some() {
            return Err(Error::parse(&label, row.line, "duplicate user id"));
        }
    }
    Ok(users)
}

fn parse_items(path: &Path) -> Result<BTreeMap<ItemId, Item>> {
    let text = read_file(path)?;
    let label = file_label(path);
    let mut items = BTreeMap::new();
    for row in rows(&label, &text) {
        row.expect_width(1)?;
        let latitude: Option<f64> = row.optional(7, "latitude")?;
        let longitude: Option<f64> = row.optional(8, "longitude")?;
        let location = match (latitude, longitude) {
            (Some(latitude), Some(longitude)) => Some(GeoPoint { latitude, longitude }),
            (None, None) => None,
            _ => return Err(Error::parse(&label, row.line, "latitude and longitude must be both present or both missing")),
        };
        let active: u32 = row.optional(12, "active_during_test")?.unwrap_or(0);
        let item = Item {
            id: row.required(0, "item id")?,
            title: row.tokens(1, "title")?,
            career_level: row.category(2, "career_level")?,
            discipline_id: row.category(3, "discipline_id")?,
            industry_id: row.category(4, "industry_id")?,
            country: row.category(5, "country")?,
            region: row.category(6, "region")?,
            location,
            employment: row.category(9, "employment")?,
            tags: row.tokens(10, "tags")?,
            created_at: row.optional(11, "created_at")?,
            active_during_test: active != 0,
        };
        if items.insert(item.id, item).is_some() {
            return Err(Error::parse(&label, row.line, "duplicate item id"));
        }
    }
    Ok(items)
}

fn parse_interactions(path: &Path, codes: &KindCodes) -> Result<Vec<(usize, Interaction)>> {
    let text = read_file(path)?;
    let label = file_label(path);
    rows(&label, &text)
        .map(|row| {
            row.expect_width(4)?;
            let code: u32 = row.required(2, "interaction_type")?;
            let kind = codes
                .decode(code)
                .ok_or_else(|| Error::parse(&label, row.line, format!("unknown interaction_type {code}")))?;
            let timestamp: i64 = row.required(3, "created_at")?;
            if timestamp <= 0 {
                return Err(Error::parse(&label, row.line, "timestamp must be positive"));
            }
            Ok((
                row.line,
                Interaction {
                    user: row.required(0, "user_id")?,
                    item: row.required(1, "item_id")?,
                    kind,
                    timestamp,
                },
            ))
        })
        .collect()
}

/// Week index on the shared Monday-aligned scale for an ISO (year, week) pair.
pub fn iso_week_index(year: i32, week: u32) -> Option<u32> {
    let monday = NaiveDate::from_isoywd_opt(year, week, Weekday::Mon)?;
    let epoch = NaiveDate::from_ymd_opt(1970, 1, 1)?;
    let days = (monday - epoch).num_days();
    Some(((days + 3) / 7) as u32)
}

/// Inverse of [`iso_week_index`].
pub fn iso_year_week(index: u32) -> (i32, u32) {
    let epoch = NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid epoch");
    let monday = epoch + chrono::Duration::days(index as i64 * 7 - 3);
    let iso = monday.iso_week();
    (iso.year(), iso.week())
}

fn parse_impressions(path: &Path) -> Result<(Vec<(usize, Impression)>, usize)> {
    let text = read_file(path)?;
    let label = file_label(path);
    let mut out = Vec::new();
    let mut row_count = 0;
    for row in rows(&label, &text) {
        row.expect_width(4)?;
        row_count += 1;
        let user: UserId = row.required(0, "user_id")?;
        let year: i32 = row.required(1, "year")?;
        let week_of_year: u32 = row.required(2, "week")?;
        let week = iso_week_index(year, week_of_year)
            .ok_or_else(|| Error::parse(&label, row.line, format!("invalid ISO week {year}-W{week_of_year}")))?;
        for item in row.id_list(3, "item id")? {
            out.push((row.line, Impression { user, item, week }));
        }
    }
    Ok((out, row_count))
}

fn parse_target_users(path: &Path) -> Result<BTreeSet<UserId>> {
    let text = read_file(path)?;
    let label = file_label(path);
    let mut out = BTreeSet::new();
    let lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.starts_with('#') && !l.trim().is_empty());
    for (idx, (n, line)) in lines.enumerate() {
        let field = line.split('\t').next().unwrap_or("").trim();
        match field.parse::<UserId>() {
            Ok(id) => {
                out.insert(id);
            }
            Err(_) if idx == 0 => {} // header
            Err(_) => return Err(Error::parse(&label, n + 1, format!("bad user id {field:?}"))),
        }
    }
    Ok(out)
}

/// Load the five challenge tables into a [`Dataset`].
pub fn load_dataset(paths: &DatasetPaths, options: &LoadOptions) -> Result<(Dataset, LoadReport)> {
    let ((users, items), ((interactions, impressions), targets)) = rayon::join(
        || rayon::join(|| parse_users(&paths.users), || parse_items(&paths.items)),
        || {
            rayon::join(
                || {
                    rayon::join(
                        || parse_interactions(&paths.interactions, &options.kind_codes),
                        || parse_impressions(&paths.impressions),
                    )
                },
                || parse_target_users(&paths.target_users),
            )
        },
    );
    let (users, items, interactions, (impressions, impression_rows), target_users) =
        (users?, items?, interactions?, impressions?, targets?);

    let mut report = LoadReport {
        users: users.len(),
        items: items.len(),
        impression_rows,
        target_users: target_users.len(),
        ..LoadReport::default()
    };

    let known = |user: UserId, item: ItemId| -> Option<&'static str> {
        if !users.contains_key(&user) {
            Some("user")
        } else if !items.contains_key(&item) {
            Some("item")
        } else {
            None
        }
    };

    let mut kept_interactions = Vec::with_capacity(interactions.len());
    for (line, ev) in interactions {
        match known(ev.user, ev.item) {
            None => kept_interactions.push(ev),
            Some(entity) => match options.unknown_references {
                ReferencePolicy::Drop => report.dropped_interactions += 1,
                ReferencePolicy::Fail => {
                    return Err(Error::UnknownReference {
                        file: file_label(&paths.interactions),
                        line,
                        entity,
                        id: if entity == "user" { ev.user } else { ev.item },
                    })
                }
            },
        }
    }
    let mut kept_impressions = Vec::with_capacity(impressions.len());
    for (line, ev) in impressions {
        match known(ev.user, ev.item) {
            None => kept_impressions.push(ev),
            Some(entity) => match options.unknown_references {
                ReferencePolicy::Drop => report.dropped_impressions += 1,
                ReferencePolicy::Fail => {
                    return Err(Error::UnknownReference {
                        file: file_label(&paths.impressions),
                        line,
                        entity,
                        id: if entity == "user" { ev.user } else { ev.item },
                    })
                }
            },
        }
    }
    report.interactions = kept_interactions.len();
    report.impressions = kept_impressions.len();

    if report.dropped_interactions + report.dropped_impressions > 0 {
        warn!(
            "dropped {} interactions and {} impressions referencing unknown users/items",
            report.dropped_interactions, report.dropped_impressions
        );
    }
    info!(
        "loaded {} users, {} items, {} interactions, {} impressions ({} rows), {} target users",
        report.users, report.items, report.interactions, report.impressions, report.impression_rows, report.target_users
    );

    let dataset = Dataset {
        users,
        items,
        events: EventLog::new(kept_interactions, kept_impressions),
        target_users,
    };
    Ok((dataset, report))
}

fn join_tokens(tokens: &TokenSet) -> String {
    let mut out = String::new();
    for (n, t) in tokens.as_slice().iter().enumerate() {
        if n > 0 {
            out.push(',');
        }
        let _ = write!(out, "{t}");
    }
    out
}

fn opt<T: std::fmt::Display>(value: Option<T>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

/// Write a dataset back out as challenge-format TSV files in `dir`.
pub fn write_dataset(dataset: &Dataset, dir: &Path, codes: &KindCodes) -> Result<DatasetPaths> {
    let paths = DatasetPaths::in_dir(dir);

    let mut out = String::from(
        "id\tjobroles\tcareer_level\tdiscipline_id\tindustry_id\tcountry\tregion\texperience_n_entries_class\t\
         experience_years_experience\texperience_years_in_current\tedu_degree\tedu_fieldofstudies\n",
    );
    for u in dataset.users.values() {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            u.id,
            join_tokens(&u.jobroles),
            u.career_level,
            u.discipline_id,
            u.industry_id,
            u.country,
            u.region,
            u.experience_n_entries_class,
            u.experience_years_experience,
            u.experience_years_in_current,
            u.edu_degree,
            join_tokens(&u.edu_fieldofstudies)
        );
    }
    write_file(&paths.users, &out)?;

    let mut out = String::from(
        "id\ttitle\tcareer_level\tdiscipline_id\tindustry_id\tcountry\tregion\tlatitude\tlongitude\t\
         employment\ttags\tcreated_at\tactive_during_test\n",
    );
    for i in dataset.items.values() {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            i.id,
            join_tokens(&i.title),
            i.career_level,
            i.discipline_id,
            i.industry_id,
            i.country,
            i.region,
            opt(i.location.map(|p| p.latitude)),
            opt(i.location.map(|p| p.longitude)),
            i.employment,
            join_tokens(&i.tags),
            opt(i.created_at),
            u8::from(i.active_during_test)
        );
    }
    write_file(&paths.items, &out)?;

    let mut out = String::from("user_id\titem_id\tinteraction_type\tcreated_at\n");
    for e in dataset.events.interactions() {
        let _ = writeln!(out, "{}\t{}\t{}\t{}", e.user, e.item, codes.encode(e.kind), e.timestamp);
    }
    write_file(&paths.interactions, &out)?;

    let mut grouped: BTreeMap<(UserId, u32), Vec<ItemId>> = BTreeMap::new();
    for e in dataset.events.impressions() {
        grouped.entry((e.user, e.week)).or_default().push(e.item);
    }
    let mut out = String::from("user_id\tyear\tweek\titems\n");
    for ((user, week), items) in grouped {
        let (year, week_of_year) = iso_year_week(week);
        let list: Vec<String> = items.iter().map(|i| i.to_string()).collect();
        let _ = writeln!(out, "{user}\t{year}\t{week_of_year}\t{}", list.join(","));
    }
    write_file(&paths.impressions, &out)?;

    let mut out = String::from("user_id\n");
    for u in &dataset.target_users {
        let _ = writeln!(out, "{u}");
    }
    write_file(&paths.target_users, &out)?;

    Ok(paths)
}
