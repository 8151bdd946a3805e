//! Block-granular event dispatch to subscribed providers.
//!
//! After a block commits, [`Dispatcher::dispatch_block`] routes each receipt
//! event to the subscribers whose filters match and appends one notification
//! per subscriber to that subscriber's feed. Subscriptions are indexed by
//! `(account, topic)` so the work is proportional to matches, not to the
//! number of subscribers.
//!
//! On disk (all canonical JSON lines):
//!
//! ```text
//! <dir>/subscribers.jsonl     known subscriber ids
//! <dir>/subscriptions.jsonl   subscribe/unsubscribe log
//! <dir>/feeds/<sha256(id)>.jsonl
//! <dir>/cursor.json           last dispatched height, replaced atomically
//! ```
//!
//! Feeds are appended before the cursor moves. Opening a directory drops
//! feed entries above the cursor, so re-dispatching after a crash neither
//! duplicates nor skips.

mod baseline;

pub use baseline::PollingBaseline;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::canonical::{self, CanonicalError};
use crate::digest::Digest;
use crate::ledger::Receipt;
use crate::runtime::{Address, Event};

#[derive(Debug, thiserror::Error)]
pub enum PubSubError {
    #[error("InvalidFilter: {0}")]
    InvalidFilter(String),
    #[error("UnknownSubscriber: {0}")]
    UnknownSubscriber(String),
    #[error("UnknownSubscription: {0}")]
    UnknownSubscription(String),
    #[error("OutOfOrderDispatch: expected height {expected}, got {found}")]
    OutOfOrderDispatch { expected: u64, found: u64 },
    #[error("injected crash before the cursor write")]
    InjectedCrash,
    #[error("corrupt dispatcher state: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Encoding(#[from] CanonicalError),
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

/// Absent fields are wildcards. A filter with neither field must say so.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Filter {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub account_address: Option<Address>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub wildcard: bool,
}

impl Filter {
    pub fn account(a: Address) -> Self {
        Filter { account_address: Some(a), ..Filter::default() }
    }

    pub fn topic(t: impl Into<String>) -> Self {
        Filter { topic: Some(t.into()), ..Filter::default() }
    }

    pub fn everything() -> Self {
        Filter { wildcard: true, ..Filter::default() }
    }

    pub fn validate(&self) -> Result<(), PubSubError> {
        if self.account_address.is_none() && self.topic.is_none() && !self.wildcard {
            return Err(PubSubError::InvalidFilter("give an accountAddress, a topic, or wildcard: true".into()));
        }
        if self.topic.as_deref() == Some("") {
            return Err(PubSubError::InvalidFilter("topic must be non-empty".into()));
        }
        Ok(())
    }

    pub fn matches(&self, event: &Event) -> bool {
        self.account_address.is_none_or(|a| a == event.emitter) && self.topic.as_deref().is_none_or(|t| t == event.topic)
    }

    fn index_key(&self) -> IndexKey {
        (self.account_address, self.topic.clone())
    }
}

type IndexKey = (Option<Address>, Option<String>);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Subscription {
    pub id: String,
    pub subscriber_id: String,
    pub filter: Filter,
    /// First block height the subscription applies to.
    pub created_at_height: u64,
    /// First block height it no longer applies to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ended_at_height: Option<u64>,
}

impl Subscription {
    fn active_at(&self, height: u64) -> bool {
        height >= self.created_at_height && self.ended_at_height.is_none_or(|end| height < end)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Notification {
    pub subscription_id: String,
    pub event: Event,
    pub block_height: u64,
    pub index_in_block: u32,
    pub delivery_seq: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct DispatcherConfig {
    /// One notification per (subscriber, event) even when several of the
    /// subscriber's filters match. When off, one per matching subscription.
    pub dedup_per_subscriber: bool,
}

impl Default for DispatcherConfig {
    fn default() -> Self {
        DispatcherConfig { dedup_per_subscriber: true }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "camelCase", rename_all_fields = "camelCase")]
enum LogEntry {
    Subscribe(Subscription),
    Unsubscribe { id: String, ended_at_height: u64 },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct SubscriberLine {
    subscriber_id: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Cursor {
    height: u64,
}

#[derive(Debug)]
pub struct Dispatcher {
    config: DispatcherConfig,
    dir: Option<PathBuf>,
    subscribers: BTreeSet<String>,
    subscriptions: BTreeMap<String, Subscription>,
    index: HashMap<IndexKey, Vec<String>>,
    feeds: HashMap<String, Vec<Notification>>,
    next_subscription: u64,
    ended: Vec<String>,
    cursor: Option<u64>,
    work: u64,
    crash_before_cursor: bool,
}

fn append_lines(path: &Path, lines: &[Vec<u8>]) -> io::Result<()> {
    let mut buf = Vec::new();
    for line in lines {
        buf.extend_from_slice(line);
        buf.push(b'\n');
    }
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    file.write_all(&buf)?;
    file.sync_data()
}

fn read_lines(path: &Path) -> io::Result<Vec<Vec<u8>>> {
    match fs::read(path) {
        Ok(bytes) => Ok(bytes.split(|b| *b == b'\n').filter(|l| !l.is_empty()).map(<[u8]>::to_vec).collect()),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Vec::new()),
        Err(e) => Err(e),
    }
}

fn decode<T: serde::de::DeserializeOwned>(line: &[u8], what: &str) -> Result<T, PubSubError> {
    let value = canonical::parse_strict(line).map_err(|e| PubSubError::Corrupt(format!("{what}: {e}")))?;
    serde_json::from_value(value).map_err(|e| PubSubError::Corrupt(format!("{what}: {e}")))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut file = File::create(&tmp)?;
        file.write_all(bytes)?;
        file.sync_data()?;
    }
    fs::rename(tmp, path)
}

impl Dispatcher {
    /// Dispatcher without persistence.
    pub fn in_memory(config: DispatcherConfig) -> Self {
        Dispatcher {
            config,
            dir: None,
            subscribers: BTreeSet::new(),
            subscriptions: BTreeMap::new(),
            index: HashMap::new(),
            feeds: HashMap::new(),
            next_subscription: 0,
            ended: Vec::new(),
            cursor: None,
            work: 0,
            crash_before_cursor: false,
        }
    }

    /// Opens (or creates) a persistent dispatcher and recovers to its cursor.
    pub fn open(dir: impl Into<PathBuf>, config: DispatcherConfig) -> Result<Self, PubSubError> {
        let dir = dir.into();
        fs::create_dir_all(dir.join("feeds"))?;
        let mut d = Dispatcher::in_memory(config);

        for line in read_lines(&dir.join("subscribers.jsonl"))? {
            let s: SubscriberLine = decode(&line, "subscribers file")?;
            d.subscribers.insert(s.subscriber_id);
        }
        for line in read_lines(&dir.join("subscriptions.jsonl"))? {
            match decode::<LogEntry>(&line, "subscriptions file")? {
                LogEntry::Subscribe(sub) => {
                    d.next_subscription += 1;
                    d.insert_subscription(sub);
                }
                LogEntry::Unsubscribe { id, ended_at_height } => {
                    d.end_subscription(&id, ended_at_height)?;
                }
            }
        }
        d.cursor = match fs::read(dir.join("cursor.json")) {
            Ok(bytes) => Some(decode::<Cursor>(&bytes, "cursor file")?.height),
            Err(e) if e.kind() == io::ErrorKind::NotFound => None,
            Err(e) => return Err(e.into()),
        };
        d.prune();
        for subscriber in d.subscribers.clone() {
            let path = feed_path(&dir, &subscriber);
            let lines = read_lines(&path)?;
            let total = lines.len();
            let mut feed = Vec::with_capacity(total);
            for line in lines {
                let n: Notification = decode(&line, "feed file")?;
                if d.cursor.is_some_and(|c| n.block_height <= c) {
                    feed.push(n);
                }
            }
            if feed.len() != total {
                // entries past the cursor come from an interrupted dispatch
                let encoded: Result<Vec<Vec<u8>>, _> = feed.iter().map(canonical::to_vec).collect();
                let mut bytes = Vec::new();
                for line in encoded? {
                    bytes.extend(line);
                    bytes.push(b'\n');
                }
                write_atomic(&path, &bytes)?;
            }
            d.feeds.insert(subscriber, feed);
        }
        d.dir = Some(dir);
        Ok(d)
    }

    pub fn config(&self) -> DispatcherConfig {
        self.config
    }

    /// Height of the last dispatched block.
    pub fn cursor(&self) -> Option<u64> {
        self.cursor
    }

    /// Total (event, subscriber) deliveries performed so far.
    pub fn work(&self) -> u64 {
        self.work
    }

    pub fn is_subscriber(&self, id: &str) -> bool {
        self.subscribers.contains(id)
    }

    pub fn register_subscriber(&mut self, id: &str) -> Result<(), PubSubError> {
        if id.is_empty() {
            return Err(PubSubError::UnknownSubscriber("subscriber id must be non-empty".into()));
        }
        if self.subscribers.contains(id) {
            return Ok(());
        }
        if let Some(dir) = &self.dir {
            let line = canonical::to_vec(&SubscriberLine { subscriber_id: id.to_owned() })?;
            append_lines(&dir.join("subscribers.jsonl"), &[line])?;
        }
        self.subscribers.insert(id.to_owned());
        self.feeds.entry(id.to_owned()).or_default();
        Ok(())
    }

    pub fn subscription(&self, id: &str) -> Option<&Subscription> {
        self.subscriptions.get(id)
    }

    pub fn subscriptions_of<'a>(&'a self, subscriber: &'a str) -> impl Iterator<Item = &'a Subscription> + 'a {
        self.subscriptions.values().filter(move |s| s.subscriber_id == subscriber)
    }

    fn insert_subscription(&mut self, sub: Subscription) {
        self.index.entry(sub.filter.index_key()).or_default().push(sub.id.clone());
        self.subscriptions.insert(sub.id.clone(), sub);
    }

    fn end_subscription(&mut self, id: &str, ended_at_height: u64) -> Result<(), PubSubError> {
        let sub = self
            .subscriptions
            .get_mut(id)
            .ok_or_else(|| PubSubError::UnknownSubscription(id.to_owned()))?;
        sub.ended_at_height = Some(ended_at_height);
        // stays indexed until the cursor passes its end, since blocks before
        // the end may still be waiting for dispatch
        self.ended.push(id.to_owned());
        self.prune();
        Ok(())
    }

    fn prune(&mut self) {
        let next = self.cursor.map_or(0, |c| c + 1);
        let subscriptions = &self.subscriptions;
        let index = &mut self.index;
        self.ended.retain(|id| {
            let Some(sub) = subscriptions.get(id) else { return false };
            if sub.ended_at_height.is_some_and(|end| end <= next) {
                if let Some(ids) = index.get_mut(&sub.filter.index_key()) {
                    ids.retain(|s| s != id);
                }
                return false;
            }
            true
        });
    }

    /// Subscribes from block `next_height` on (the next block to commit).
    pub fn subscribe(&mut self, subscriber: &str, filter: Filter, next_height: u64) -> Result<String, PubSubError> {
        if !self.subscribers.contains(subscriber) {
            return Err(PubSubError::UnknownSubscriber(subscriber.to_owned()));
        }
        filter.validate()?;
        let sub = Subscription {
            id: format!("sub-{}", self.next_subscription),
            subscriber_id: subscriber.to_owned(),
            filter,
            created_at_height: next_height,
            ended_at_height: None,
        };
        if let Some(dir) = &self.dir {
            append_lines(&dir.join("subscriptions.jsonl"), &[canonical::to_vec(&LogEntry::Subscribe(sub.clone()))?])?;
        }
        self.next_subscription += 1;
        let id = sub.id.clone();
        self.insert_subscription(sub);
        Ok(id)
    }

    /// Stops deliveries for blocks from `next_height` on. Delivered
    /// notifications stay in the feed.
    pub fn unsubscribe(&mut self, id: &str, next_height: u64) -> Result<(), PubSubError> {
        match self.subscriptions.get(id) {
            None => return Err(PubSubError::UnknownSubscription(id.to_owned())),
            Some(s) if s.ended_at_height.is_some() => return Err(PubSubError::UnknownSubscription(id.to_owned())),
            Some(_) => {}
        }
        if let Some(dir) = &self.dir {
            let entry = LogEntry::Unsubscribe { id: id.to_owned(), ended_at_height: next_height };
            append_lines(&dir.join("subscriptions.jsonl"), &[canonical::to_vec(&entry)?])?;
        }
        self.end_subscription(id, next_height)
    }

    /// Makes the next dispatch fail after writing feeds but before moving the
    /// cursor, as a crash would.
    pub fn inject_crash_before_cursor(&mut self) {
        self.crash_before_cursor = true;
    }

    /// Routes the events of block `height` to matching subscribers.
    /// `receipts` are the block's receipts in transaction order.
    pub fn dispatch_block<'a>(
        &mut self,
        height: u64,
        receipts: impl IntoIterator<Item = &'a Receipt>,
    ) -> Result<usize, PubSubError> {
        let expected = self.cursor.map_or(0, |c| c + 1);
        if height != expected {
            return Err(PubSubError::OutOfOrderDispatch { expected, found: height });
        }

        let mut pending: BTreeMap<String, Vec<Notification>> = BTreeMap::new();
        let mut matched: Vec<&Subscription> = Vec::new();
        for receipt in receipts {
            for event in &receipt.events {
                matched.clear();
                let keys = [
                    (Some(event.emitter), Some(event.topic.clone())),
                    (Some(event.emitter), None),
                    (None, Some(event.topic.clone())),
                    (None, None),
                ];
                for key in &keys {
                    if let Some(ids) = self.index.get(key) {
                        matched.extend(ids.iter().filter_map(|id| self.subscriptions.get(id)).filter(|s| s.active_at(height)));
                    }
                }
                // creation order keeps the choice of subscription id stable
                matched.sort_by_key(|s| (s.subscriber_id.as_str(), sub_number(&s.id)));
                let mut last_subscriber: Option<&str> = None;
                for sub in &matched {
                    if self.config.dedup_per_subscriber && last_subscriber == Some(sub.subscriber_id.as_str()) {
                        continue;
                    }
                    last_subscriber = Some(&sub.subscriber_id);
                    let feed_len = self.feeds.get(&sub.subscriber_id).map_or(0, Vec::len);
                    let queued = pending.entry(sub.subscriber_id.clone()).or_default();
                    let delivery_seq = (feed_len + queued.len()) as u64;
                    queued.push(Notification {
                        subscription_id: sub.id.clone(),
                        event: event.clone(),
                        block_height: height,
                        index_in_block: receipt.index_in_block,
                        delivery_seq,
                    });
                }
            }
        }

        if let Some(dir) = &self.dir {
            for (subscriber, notes) in &pending {
                let lines: Result<Vec<Vec<u8>>, _> = notes.iter().map(canonical::to_vec).collect();
                append_lines(&feed_path(dir, subscriber), &lines?)?;
            }
            if self.crash_before_cursor {
                self.crash_before_cursor = false;
                return Err(PubSubError::InjectedCrash);
            }
            write_atomic(&dir.join("cursor.json"), &canonical::to_vec(&Cursor { height })?)?;
        }

        let delivered: usize = pending.values().map(Vec::len).sum();
        for (subscriber, notes) in pending {
            self.feeds.entry(subscriber).or_default().extend(notes);
        }
        self.work += delivered as u64;
        self.cursor = Some(height);
        if !self.ended.is_empty() {
            self.prune();
        }
        Ok(delivered)
    }

    /// Notifications with `deliverySeq > after_seq`, ascending. `-1` reads
    /// the whole feed.
    pub fn poll(&self, subscriber: &str, after_seq: i64) -> Result<&[Notification], PubSubError> {
        if !self.subscribers.contains(subscriber) {
            return Err(PubSubError::UnknownSubscriber(subscriber.to_owned()));
        }
        let feed = self.feeds.get(subscriber).map_or(&[][..], Vec::as_slice);
        let start = usize::try_from(after_seq.saturating_add(1)).unwrap_or(0).min(feed.len());
        Ok(&feed[start..])
    }

    /// Highest delivery sequence in a subscriber's feed.
    pub fn latest_seq(&self, subscriber: &str) -> Option<u64> {
        self.feeds.get(subscriber).and_then(|f| f.last()).map(|n| n.delivery_seq)
    }
}

fn sub_number(id: &str) -> u64 {
    id.strip_prefix("sub-").and_then(|n| n.parse().ok()).unwrap_or(u64::MAX)
}

fn feed_path(dir: &Path, subscriber: &str) -> PathBuf {
    dir.join("feeds").join(format!("{}.jsonl", Digest::of(subscriber.as_bytes()).to_hex()))
}
