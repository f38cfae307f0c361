//! In-process publish/subscribe broker.
//!
//! One partition per topic with dense offsets from 0. Consumer groups give
//! broadcast across groups and queue semantics within a group; only one handle
//! per group may be active. Delivery is at-least-once: a handle dropped before
//! committing leaves its messages to be redelivered to the next handle.
//!
//! Topic names used by the platform: `wf.<workflow>.<from>-<to>` between stream
//! nodes and `opt.<jobId>.<stage>` between optimizer stages.

use std::collections::{HashMap, VecDeque};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub topic: String,
    pub payload: Vec<u8>,
    pub offset: u64,
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BrokerError {
    #[error("topic name must not be empty")]
    EmptyTopic,
    #[error("group `{group}` already has an active consumer on `{topic}`")]
    GroupBusy { topic: String, group: String },
    #[error("offset {offset} was never delivered to this subscription")]
    InvalidOffset { offset: u64 },
    #[error("max_messages must be at least 1")]
    InvalidMax,
}

pub fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

#[derive(Debug, Default)]
struct GroupState {
    /// Last committed offset, -1 when nothing is committed.
    committed: i64,
    active: bool,
}

#[derive(Debug, Default)]
struct TopicState {
    /// Offset of `messages[0]`; grows when retention drops old messages.
    base: u64,
    messages: VecDeque<Message>,
    groups: HashMap<String, GroupState>,
}

impl TopicState {
    fn next_offset(&self) -> u64 {
        self.base + self.messages.len() as u64
    }
}

#[derive(Debug, Default)]
struct Topic {
    state: Mutex<TopicState>,
    arrived: Condvar,
}

impl Topic {
    fn lock(&self) -> MutexGuard<'_, TopicState> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }
}

#[derive(Debug, Default)]
pub struct Broker {
    topics: Mutex<HashMap<String, Arc<Topic>>>,
    retention_max: Option<usize>,
}

impl Broker {
    pub fn new() -> Self {
        Self::default()
    }

    /// Keeps at most `max` messages per topic, dropping the oldest.
    pub fn with_retention(max: usize) -> Self {
        Broker { topics: Mutex::default(), retention_max: Some(max.max(1)) }
    }

    fn topic(&self, name: &str) -> Arc<Topic> {
        let mut topics = self.topics.lock().unwrap_or_else(|e| e.into_inner());
        topics.entry(name.to_string()).or_default().clone()
    }

    fn existing(&self, name: &str) -> Option<Arc<Topic>> {
        self.topics.lock().unwrap_or_else(|e| e.into_inner()).get(name).cloned()
    }

    pub fn publish(&self, topic: &str, payload: Vec<u8>) -> Result<u64, BrokerError> {
        if topic.is_empty() {
            return Err(BrokerError::EmptyTopic);
        }
        let t = self.topic(topic);
        let mut state = t.lock();
        let offset = state.next_offset();
        state.messages.push_back(Message { topic: topic.to_string(), payload, offset, timestamp_ms: now_ms() });
        if let Some(max) = self.retention_max {
            while state.messages.len() > max {
                state.messages.pop_front();
                state.base += 1;
            }
        }
        drop(state);
        t.arrived.notify_all();
        Ok(offset)
    }

    /// Joins `group` on `topic`. A new group starts at offset 0; a returning
    /// group resumes after its committed offset.
    pub fn subscribe(&self, topic: &str, group: &str) -> Result<Subscription, BrokerError> {
        if topic.is_empty() {
            return Err(BrokerError::EmptyTopic);
        }
        let t = self.topic(topic);
        let mut state = t.lock();
        let g = state.groups.entry(group.to_string()).or_insert(GroupState { committed: -1, active: false });
        if g.active {
            return Err(BrokerError::GroupBusy { topic: topic.to_string(), group: group.to_string() });
        }
        g.active = true;
        let start = (g.committed + 1) as u64;
        drop(state);
        Ok(Subscription { topic: t, name: topic.to_string(), group: group.to_string(), start, position: start })
    }

    pub fn topics(&self) -> Vec<String> {
        let mut names: Vec<String> = self.topics.lock().unwrap_or_else(|e| e.into_inner()).keys().cloned().collect();
        names.sort();
        names
    }

    /// Offset the next publish to `topic` will get (0 for unknown topics).
    pub fn end_offset(&self, topic: &str) -> u64 {
        self.existing(topic).map_or(0, |t| t.lock().next_offset())
    }

    pub fn committed(&self, topic: &str, group: &str) -> Option<i64> {
        self.existing(topic)?.lock().groups.get(group).map(|g| g.committed)
    }

    /// Reads up to `max` retained messages from `from` without any group bookkeeping.
    pub fn fetch(&self, topic: &str, from: u64, max: usize) -> Vec<Message> {
        let Some(t) = self.existing(topic) else { return Vec::new() };
        let state = t.lock();
        let skip = from.saturating_sub(state.base) as usize;
        state.messages.iter().skip(skip).take(max).cloned().collect()
    }

    pub fn last_message(&self, topic: &str) -> Option<Message> {
        self.existing(topic)?.lock().messages.back().cloned()
    }

    /// Drops a topic with its messages and groups. Live handles keep their
    /// detached copy and see no further messages.
    pub fn delete_topic(&self, topic: &str) -> bool {
        self.topics.lock().unwrap_or_else(|e| e.into_inner()).remove(topic).is_some()
    }
}

/// An active consumer handle for one (topic, group). Dropping it releases the group.
#[derive(Debug)]
pub struct Subscription {
    topic: Arc<Topic>,
    name: String,
    group: String,
    start: u64,
    /// Next offset to deliver from this handle.
    position: u64,
}

impl Subscription {
    pub fn topic(&self) -> &str {
        &self.name
    }

    pub fn group(&self) -> &str {
        &self.group
    }

    pub fn position(&self) -> u64 {
        self.position
    }

    /// Returns up to `max` messages in offset order, waiting up to `timeout`
    /// for at least one. An empty result means the timeout elapsed.
    pub fn poll(&mut self, max: usize, timeout: Duration) -> Result<Vec<Message>, BrokerError> {
        if max == 0 {
            return Err(BrokerError::InvalidMax);
        }
        let deadline = Instant::now() + timeout;
        let mut state = self.topic.lock();
        loop {
            if self.position < state.base {
                self.position = state.base;
            }
            if self.position < state.next_offset() {
                let skip = (self.position - state.base) as usize;
                let out: Vec<Message> = state.messages.iter().skip(skip).take(max).cloned().collect();
                self.position += out.len() as u64;
                return Ok(out);
            }
            let now = Instant::now();
            if now >= deadline {
                return Ok(Vec::new());
            }
            state = self.topic.arrived.wait_timeout(state, deadline - now).unwrap_or_else(|e| e.into_inner()).0;
        }
    }

    /// Records `offset` as processed for the group; commits never move backwards.
    pub fn commit(&mut self, offset: u64) -> Result<(), BrokerError> {
        if offset < self.start || offset >= self.position {
            return Err(BrokerError::InvalidOffset { offset });
        }
        let mut state = self.topic.lock();
        if let Some(g) = state.groups.get_mut(&self.group) {
            g.committed = g.committed.max(offset as i64);
        }
        Ok(())
    }
}

impl Drop for Subscription {
    fn drop(&mut self) {
        let mut state = self.topic.lock();
        if let Some(g) = state.groups.get_mut(&self.group) {
            g.active = false;
        }
    }
}
