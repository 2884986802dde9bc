use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::{Map, Value};

use super::{
    AccountProfile, Conversation, Corpus, CorpusError, ParentTweet, Provenance, Reply, ReplyLabel,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    JsonLines,
    Csv,
}

impl Format {
    /// Guess from the file extension; JSON Lines unless it ends in `.csv`.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::JsonLines,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IngestWarning {
    pub line: usize,
    pub conversation: String,
    pub field: String,
}

/// What ingestion had to drop or default.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub records: usize,
    pub replies: usize,
    pub dropped_deep_replies: usize,
    pub defaulted_fields: Vec<IngestWarning>,
}

pub fn load_corpus(path: impl AsRef<Path>, format: Format) -> Result<Corpus, CorpusError> {
    load_corpus_with_report(path, format).map(|(c, _)| c)
}

pub fn load_corpus_with_report(
    path: impl AsRef<Path>,
    format: Format,
) -> Result<(Corpus, IngestReport), CorpusError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut report = IngestReport::default();
    let conversations = match format {
        Format::JsonLines => parse_jsonl(&text, &mut report)?,
        Format::Csv => parse_csv(&text, &mut report)?,
    };
    report.records = conversations.len();
    report.replies = conversations.iter().map(|c| c.replies().len()).sum();
    for w in &report.defaulted_fields {
        log::warn!("line {}: {} missing, defaulted", w.line, w.field);
    }
    Ok((
        Corpus::new(conversations, Provenance::Ingested, None)?,
        report,
    ))
}

fn schema(line: usize, field: &str, message: impl Into<String>) -> CorpusError {
    CorpusError::Schema {
        line,
        field: field.to_string(),
        message: message.into(),
    }
}

fn parse_jsonl(text: &str, report: &mut IngestReport) -> Result<Vec<Conversation>, CorpusError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(raw).map_err(|e| CorpusError::Parse {
            line,
            message: e.to_string(),
        })?;
        let obj = value
            .as_object()
            .ok_or_else(|| schema(line, "<record>", "expected an object"))?;
        out.push(record_from_json(obj, line, report)?);
    }
    Ok(out)
}

fn required_str(obj: &Map<String, Value>, field: &str, line: usize) -> Result<String, CorpusError> {
    match obj.get(field) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(Value::Number(n)) => Ok(n.to_string()),
        Some(_) => Err(schema(line, field, "expected a string")),
        None => Err(schema(line, field, "missing required field")),
    }
}

fn json_count(v: &Value) -> Option<u64> {
    match v {
        Value::Number(n) => n.as_u64().or_else(|| {
            n.as_f64()
                .filter(|f| *f >= 0.0 && f.fract() == 0.0)
                .map(|f| f as u64)
        }),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

fn json_flag(v: &Value) -> Option<bool> {
    match v {
        Value::Bool(b) => Some(*b),
        Value::Number(n) => match n.as_u64() {
            Some(0) => Some(false),
            Some(1) => Some(true),
            _ => None,
        },
        Value::String(s) => parse_flag(s),
        _ => None,
    }
}

fn parse_flag(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "1" => Some(true),
        "false" | "0" => Some(false),
        _ => None,
    }
}

/// Fill count and boolean fields from a lookup, defaulting (with a warning)
/// whatever is absent.
struct FieldFiller<'a> {
    line: usize,
    id: &'a str,
    prefix: &'a str,
    report: &'a mut IngestReport,
}

impl FieldFiller<'_> {
    fn missing(&mut self, field: &str) {
        self.report.defaulted_fields.push(IngestWarning {
            line: self.line,
            conversation: self.id.to_string(),
            field: format!("{}{}", self.prefix, field),
        });
    }

    fn count(
        &mut self,
        raw: Option<&Value>,
        field: &str,
        slot: &mut u64,
    ) -> Result<(), CorpusError> {
        match raw {
            None | Some(Value::Null) => self.missing(field),
            Some(v) => {
                *slot = json_count(v).ok_or_else(|| {
                    schema(
                        self.line,
                        &format!("{}{}", self.prefix, field),
                        "expected a nonnegative integer",
                    )
                })?
            }
        }
        Ok(())
    }

    fn flag(
        &mut self,
        raw: Option<&Value>,
        field: &str,
        slot: &mut bool,
    ) -> Result<(), CorpusError> {
        match raw {
            None | Some(Value::Null) => self.missing(field),
            Some(v) => {
                *slot = json_flag(v).ok_or_else(|| {
                    schema(
                        self.line,
                        &format!("{}{}", self.prefix, field),
                        "expected a boolean",
                    )
                })?
            }
        }
        Ok(())
    }
}

fn parent_from_json(
    obj: &Map<String, Value>,
    id: &str,
    line: usize,
    report: &mut IngestReport,
) -> Result<ParentTweet, CorpusError> {
    let parent = match obj.get("parent") {
        Some(Value::Object(p)) => p,
        Some(_) => return Err(schema(line, "parent", "expected an object")),
        None => return Err(schema(line, "parent", "missing required field")),
    };
    let text = match parent.get("text") {
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err(schema(line, "parent.text", "expected a string")),
        None => return Err(schema(line, "parent.text", "missing required field")),
    };
    let mut p = ParentTweet {
        id: id.to_string(),
        text,
        ..Default::default()
    };
    let mut filler = FieldFiller {
        line,
        id,
        prefix: "parent.",
        report,
    };
    for field in ParentTweet::COUNT_FIELDS {
        let slot = p.count_mut(field).expect("known field");
        filler.count(parent.get(field), field, slot)?;
    }
    for field in ParentTweet::BOOL_FIELDS {
        let slot = p.flag_mut(field).expect("known field");
        filler.flag(parent.get(field), field, slot)?;
    }
    Ok(p)
}

fn account_from_json(
    obj: &Map<String, Value>,
    id: &str,
    line: usize,
    report: &mut IngestReport,
) -> Result<AccountProfile, CorpusError> {
    let empty = Map::new();
    let account = match obj.get("account") {
        Some(Value::Object(a)) => a,
        None | Some(Value::Null) => &empty,
        Some(_) => return Err(schema(line, "account", "expected an object")),
    };
    let mut a = AccountProfile::default();
    let mut filler = FieldFiller {
        line,
        id,
        prefix: "account.",
        report,
    };
    for field in AccountProfile::COUNT_FIELDS {
        let slot = a.count_mut(field).expect("known field");
        filler.count(account.get(field), field, slot)?;
    }
    for field in AccountProfile::BOOL_FIELDS {
        let slot = a.flag_mut(field).expect("known field");
        filler.flag(account.get(field), field, slot)?;
    }
    a.time_zone = match account.get("time_zone") {
        None => {
            filler.missing("time_zone");
            None
        }
        Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => {
            return Err(schema(
                line,
                "account.time_zone",
                "expected a string or null",
            ))
        }
    };
    Ok(a)
}

fn reply_from_json(
    v: &Value,
    line: usize,
    idx: usize,
) -> Result<(Reply, usize, bool), CorpusError> {
    let field = |name: &str| format!("replies[{idx}].{name}");
    let obj = v
        .as_object()
        .ok_or_else(|| schema(line, &format!("replies[{idx}]"), "expected an object"))?;
    let id = required_str(obj, "id", line)
        .map_err(|_| schema(line, &field("id"), "missing or invalid"))?;
    let text = match obj.get("text") {
        Some(Value::String(s)) => s.clone(),
        _ => return Err(schema(line, &field("text"), "missing or invalid")),
    };
    let label = match obj.get("label") {
        None | Some(Value::Null) => ReplyLabel::Unlabeled,
        Some(Value::String(s)) => ReplyLabel::parse(s)
            .ok_or_else(|| schema(line, &field("label"), format!("unknown label {s:?}")))?,
        Some(_) => return Err(schema(line, &field("label"), "expected a string")),
    };
    // Nested replies and depth > 1 are deeper thread levels: not kept.
    let nested = match obj.get("replies") {
        Some(Value::Array(a)) => count_nested(a),
        _ => 0,
    };
    let deep = obj.get("depth").and_then(json_count).is_some_and(|d| d > 1);
    Ok((Reply::labeled(id, text, label), nested, deep))
}

fn count_nested(replies: &[Value]) -> usize {
    replies
        .iter()
        .map(|r| {
            1 + match r.get("replies") {
                Some(Value::Array(a)) => count_nested(a),
                _ => 0,
            }
        })
        .sum()
}

fn record_from_json(
    obj: &Map<String, Value>,
    line: usize,
    report: &mut IngestReport,
) -> Result<Conversation, CorpusError> {
    let id = required_str(obj, "id", line)?;
    let parent = parent_from_json(obj, &id, line, report)?;
    let account = account_from_json(obj, &id, line, report)?;
    let raw_replies = match obj.get("replies") {
        Some(Value::Array(a)) => a,
        Some(_) => return Err(schema(line, "replies", "expected an array")),
        None => return Err(schema(line, "replies", "missing required field")),
    };
    let mut replies = Vec::with_capacity(raw_replies.len());
    for (idx, raw) in raw_replies.iter().enumerate() {
        let (reply, nested, deep) = reply_from_json(raw, line, idx)?;
        report.dropped_deep_replies += nested;
        if deep {
            report.dropped_deep_replies += 1;
        } else {
            replies.push(reply);
        }
    }
    if replies.is_empty() {
        return Err(schema(
            line,
            "replies",
            "a conversation needs at least one direct reply",
        ));
    }
    Conversation::new(parent, account, replies)
}

const CSV_REQUIRED: [&str; 4] = ["id", "parent_text", "reply_id", "reply_text"];

fn parse_csv(text: &str, report: &mut IngestReport) -> Result<Vec<Conversation>, CorpusError> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(false)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| CorpusError::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let col: HashMap<&str, usize> = headers
        .iter()
        .enumerate()
        .map(|(i, h)| (h.trim(), i))
        .collect();
    for field in CSV_REQUIRED {
        if !col.contains_key(field) {
            return Err(schema(1, field, "missing required column"));
        }
    }

    // Conversations keep the order of their first row.
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, (usize, ParentTweet, AccountProfile, Vec<Reply>)> =
        HashMap::new();
    for result in reader.records() {
        let record = result.map_err(|e| CorpusError::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let get = |name: &str| {
            col.get(name)
                .and_then(|&i| record.get(i))
                .map(str::to_string)
        };
        let id = get("id")
            .filter(|s| !s.is_empty())
            .ok_or_else(|| schema(line, "id", "empty"))?;
        let reply_id = get("reply_id").unwrap_or_default();
        let reply_text = get("reply_text").unwrap_or_default();
        let label_raw = get("reply_label").unwrap_or_default();
        let label = ReplyLabel::parse(&label_raw)
            .ok_or_else(|| schema(line, "reply_label", format!("unknown label {label_raw:?}")))?;
        let depth = get("reply_depth")
            .and_then(|d| d.trim().parse::<u64>().ok())
            .unwrap_or(1);

        if !groups.contains_key(&id) {
            let parent_text = get("parent_text").unwrap_or_default();
            let as_values: Map<String, Value> = headers
                .iter()
                .zip(record.iter())
                .filter(|(_, v)| !v.trim().is_empty())
                .map(|(h, v)| (h.trim().to_string(), Value::String(v.to_string())))
                .collect();
            let mut parent_obj = as_values.clone();
            parent_obj.insert("text".into(), Value::String(parent_text));
            let mut wrapper = Map::new();
            wrapper.insert("parent".into(), Value::Object(parent_obj));
            wrapper.insert("account".into(), Value::Object(as_values.clone()));
            let parent = parent_from_json(&wrapper, &id, line, report)?;
            let mut account = account_from_json(&wrapper, &id, line, report)?;
            if !col.contains_key("time_zone") {
                account.time_zone = None;
            }
            order.push(id.clone());
            groups.insert(id.clone(), (line, parent, account, Vec::new()));
        }
        if depth > 1 {
            report.dropped_deep_replies += 1;
            continue;
        }
        if reply_id.is_empty() {
            continue;
        }
        groups
            .get_mut(&id)
            .expect("inserted")
            .3
            .push(Reply::labeled(reply_id, reply_text, label));
    }

    order
        .into_iter()
        .map(|id| {
            let (line, parent, account, replies) = groups.remove(&id).expect("grouped");
            if replies.is_empty() {
                return Err(schema(
                    line,
                    "replies",
                    "a conversation needs at least one direct reply",
                ));
            }
            Conversation::new(parent, account, replies)
        })
        .collect()
}

#[derive(Serialize)]
struct ReplyRecord<'a> {
    id: &'a str,
    text: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<&'static str>,
}

#[derive(Serialize)]
struct ParentRecord<'a> {
    text: &'a str,
    hashtag_count: u64,
    symbol_count: u64,
    mention_count: u64,
    url_count: u64,
    is_quote_status: bool,
    possibly_sensitive: bool,
    num_retweets: u64,
    num_favorites: u64,
}

#[derive(Serialize)]
struct ConversationRecord<'a> {
    id: &'a str,
    parent: ParentRecord<'a>,
    account: &'a AccountProfile,
    replies: Vec<ReplyRecord<'a>>,
    y: usize,
}

fn record_of(c: &Conversation) -> ConversationRecord<'_> {
    let p = &c.parent;
    ConversationRecord {
        id: &p.id,
        parent: ParentRecord {
            text: &p.text,
            hashtag_count: p.hashtag_count,
            symbol_count: p.symbol_count,
            mention_count: p.mention_count,
            url_count: p.url_count,
            is_quote_status: p.is_quote_status,
            possibly_sensitive: p.possibly_sensitive,
            num_retweets: p.num_retweets,
            num_favorites: p.num_favorites,
        },
        account: &c.account,
        replies: c
            .replies()
            .iter()
            .map(|r| ReplyRecord {
                id: &r.id,
                text: &r.text,
                label: r.label.as_str(),
            })
            .collect(),
        y: c.y(),
    }
}

/// Canonical JSON Lines serialization; `y` is written for convenience and
/// ignored on load.
pub fn to_jsonl_string(corpus: &Corpus) -> String {
    let mut out = String::new();
    for c in corpus.iter() {
        out.push_str(&serde_json::to_string(&record_of(c)).expect("serializable"));
        out.push('\n');
    }
    out
}

pub fn write_jsonl(corpus: &Corpus, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    fs::write(path, to_jsonl_string(corpus)).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })
}
