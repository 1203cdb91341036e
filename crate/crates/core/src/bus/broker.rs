//! The broker: topic logs, schema registry, consumer groups.

use std::collections::{HashMap, HashSet, VecDeque};
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use super::schema::{FieldSpec, Schema, SchemaFile};
use super::{BusClass, BusError, Message, Payload};

/// Handle identifying one member of one consumer group on one topic.
///
/// May be moved between threads, but must not be used by two threads at once.
#[derive(Debug, Clone)]
pub struct Subscriber {
    pub topic: String,
    pub group: String,
    pub member: String,
}

struct GroupState {
    /// Members in join order; round-robin assignment walks this list.
    members: Vec<String>,
    /// Pending offsets assigned per member, in increasing order.
    queues: HashMap<String, VecDeque<u64>>,
    /// Next log offset not yet assigned to any member.
    next_assign: u64,
    /// Round-robin pointer into `members`.
    rr: usize,
    removed: HashSet<String>,
}

impl GroupState {
    fn new() -> Self {
        GroupState {
            members: Vec::new(),
            queues: HashMap::new(),
            next_assign: 0,
            rr: 0,
            removed: HashSet::new(),
        }
    }

    /// Assign every unassigned offset round-robin among current members.
    /// Rebalancing after a join takes effect here, at the next delivery
    /// decision; already-assigned offsets are not re-dealt.
    fn assign_up_to(&mut self, log_len: u64) {
        if self.members.is_empty() {
            return;
        }
        while self.next_assign < log_len {
            let member = self.members[self.rr % self.members.len()].clone();
            self.rr = (self.rr + 1) % self.members.len();
            self.queues
                .get_mut(&member)
                .expect("member has a queue")
                .push_back(self.next_assign);
            self.next_assign += 1;
        }
    }
}

struct TopicState {
    class: BusClass,
    log: Vec<Message>,
    schemas: Vec<Schema>,
    rejections: u64,
    groups: HashMap<String, GroupState>,
}

#[derive(Default)]
struct Inner {
    topics: HashMap<String, TopicState>,
}

/// Thread-safe in-process broker. Cloning shares the underlying state; every
/// operation is atomic with respect to logs and cursors.
#[derive(Clone, Default)]
pub struct Broker {
    inner: Arc<Mutex<Inner>>,
}

impl Broker {
    pub fn new() -> Self {
        Broker::default()
    }

    pub fn create_topic(&self, name: &str, class: BusClass) -> Result<(), BusError> {
        let mut inner = self.inner.lock().unwrap();
        if inner.topics.contains_key(name) {
            return Err(BusError::DuplicateTopic(name.to_string()));
        }
        inner.topics.insert(
            name.to_string(),
            TopicState {
                class,
                log: Vec::new(),
                schemas: Vec::new(),
                rejections: 0,
                groups: HashMap::new(),
            },
        );
        Ok(())
    }

    /// Register the next schema version for a topic. Prior versions remain
    /// retrievable; versions are consecutive from 1.
    pub fn register_schema(&self, topic: &str, fields: Vec<FieldSpec>) -> Result<u32, BusError> {
        Schema::check_fields(&fields)?;
        let mut inner = self.inner.lock().unwrap();
        let state = inner
            .topics
            .get_mut(topic)
            .ok_or_else(|| BusError::UnknownTopic(topic.to_string()))?;
        let version = state.schemas.len() as u32 + 1;
        state.schemas.push(Schema {
            topic: topic.to_string(),
            version,
            fields,
        });
        Ok(version)
    }

    /// Fetch a registered schema version (1-based), or the latest when
    /// `version` is `None`.
    pub fn schema(&self, topic: &str, version: Option<u32>) -> Result<Schema, BusError> {
        let inner = self.inner.lock().unwrap();
        let state = inner
            .topics
            .get(topic)
            .ok_or_else(|| BusError::UnknownTopic(topic.to_string()))?;
        let schema = match version {
            Some(v) => state.schemas.get(v as usize - 1),
            None => state.schemas.last(),
        };
        schema
            .cloned()
            .ok_or_else(|| BusError::NoSchema(topic.to_string()))
    }

    /// Load every `*.json` schema document from a directory and register it
    /// on its topic. Topics must already exist.
    pub fn load_schema_dir(&self, dir: &Path) -> Result<usize, BusError> {
        let mut entries: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| BusError::SchemaFile(format!("{}: {e}", dir.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
            .collect();
        entries.sort();
        let mut loaded = 0;
        for path in entries {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| BusError::SchemaFile(format!("{}: {e}", path.display())))?;
            let file: SchemaFile = serde_json::from_str(&text)
                .map_err(|e| BusError::SchemaFile(format!("{}: {e}", path.display())))?;
            self.register_schema(&file.topic, file.fields)?;
            loaded += 1;
        }
        Ok(loaded)
    }

    /// Validate against the latest schema and append. On a validation
    /// failure the message is dropped and the topic's rejection counter
    /// is incremented.
    pub fn publish(&self, topic: &str, payload: Payload) -> Result<u64, BusError> {
        self.publish_keyed(topic, None, payload)
    }

    pub fn publish_keyed(
        &self,
        topic: &str,
        key: Option<String>,
        payload: Payload,
    ) -> Result<u64, BusError> {
        let mut inner = self.inner.lock().unwrap();
        let state = inner
            .topics
            .get_mut(topic)
            .ok_or_else(|| BusError::UnknownTopic(topic.to_string()))?;
        let schema = state
            .schemas
            .last()
            .ok_or_else(|| BusError::NoSchema(topic.to_string()))?;
        if let Err(reason) = schema.validate(&payload) {
            state.rejections += 1;
            return Err(BusError::SchemaViolation {
                topic: topic.to_string(),
                reason,
            });
        }
        let offset = state.log.len() as u64;
        state.log.push(Message {
            topic: topic.to_string(),
            key,
            payload,
            produced_at_ms: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis() as u64)
                .unwrap_or(0),
            offset,
        });
        Ok(offset)
    }

    /// Join a consumer group. A new group starts at offset 0 of the retained
    /// log; a new member of an existing group receives only offsets assigned
    /// after it joined.
    pub fn subscribe(
        &self,
        topic: &str,
        group: &str,
        member: &str,
    ) -> Result<Subscriber, BusError> {
        let mut inner = self.inner.lock().unwrap();
        let state = inner
            .topics
            .get_mut(topic)
            .ok_or_else(|| BusError::UnknownTopic(topic.to_string()))?;
        let g = state
            .groups
            .entry(group.to_string())
            .or_insert_with(GroupState::new);
        if g.members.iter().any(|m| m == member) {
            return Err(BusError::DuplicateMember {
                group: group.to_string(),
                member: member.to_string(),
            });
        }
        g.removed.remove(member);
        g.members.push(member.to_string());
        g.queues.insert(member.to_string(), VecDeque::new());
        Ok(Subscriber {
            topic: topic.to_string(),
            group: group.to_string(),
            member: member.to_string(),
        })
    }

    /// Non-blocking poll: up to `max_batch` messages assigned to this member
    /// in offset order. Returns an empty list when caught up.
    pub fn poll(&self, sub: &Subscriber, max_batch: usize) -> Result<Vec<Message>, BusError> {
        assert!(max_batch > 0, "max_batch must be positive");
        let mut inner = self.inner.lock().unwrap();
        let state = inner
            .topics
            .get_mut(&sub.topic)
            .ok_or_else(|| BusError::UnknownTopic(sub.topic.clone()))?;
        let log_len = state.log.len() as u64;
        let g = state
            .groups
            .get_mut(&sub.group)
            .ok_or_else(|| BusError::StaleHandle {
                group: sub.group.clone(),
                member: sub.member.clone(),
            })?;
        if g.removed.contains(&sub.member) || !g.members.iter().any(|m| m == &sub.member) {
            return Err(BusError::StaleHandle {
                group: sub.group.clone(),
                member: sub.member.clone(),
            });
        }
        g.assign_up_to(log_len);
        let queue = g.queues.get_mut(&sub.member).expect("member has a queue");
        let take = max_batch.min(queue.len());
        let offsets: Vec<u64> = queue.drain(..take).collect();
        Ok(offsets
            .into_iter()
            .map(|o| state.log[o as usize].clone())
            .collect())
    }

    /// Remove a member from its group. Pending offsets already assigned to
    /// it are re-dealt to the remaining members (kept in offset order).
    /// Subsequent polls with the handle fail with a stale-handle error.
    pub fn remove_member(&self, sub: &Subscriber) -> Result<(), BusError> {
        let mut inner = self.inner.lock().unwrap();
        let state = inner
            .topics
            .get_mut(&sub.topic)
            .ok_or_else(|| BusError::UnknownTopic(sub.topic.clone()))?;
        let g = state
            .groups
            .get_mut(&sub.group)
            .ok_or_else(|| BusError::StaleHandle {
                group: sub.group.clone(),
                member: sub.member.clone(),
            })?;
        let Some(pos) = g.members.iter().position(|m| m == &sub.member) else {
            return Err(BusError::StaleHandle {
                group: sub.group.clone(),
                member: sub.member.clone(),
            });
        };
        g.members.remove(pos);
        if g.rr > pos {
            g.rr -= 1;
        }
        if !g.members.is_empty() {
            g.rr %= g.members.len();
        } else {
            g.rr = 0;
        }
        g.removed.insert(sub.member.clone());
        let orphaned = g.queues.remove(&sub.member).unwrap_or_default();
        if g.members.is_empty() {
            // No members left: hand the offsets back to the assignment
            // frontier so a future member receives them.
            if let Some(min) = orphaned.front() {
                g.next_assign = g.next_assign.min(*min);
            }
        } else {
            for (i, offset) in orphaned.into_iter().enumerate() {
                let member = g.members[i % g.members.len()].clone();
                let q = g.queues.get_mut(&member).expect("member has a queue");
                let at = q.partition_point(|&o| o < offset);
                q.insert(at, offset);
            }
        }
        Ok(())
    }

    /// Per-topic (appends, rejections).
    pub fn topic_stats(&self, topic: &str) -> Result<(u64, u64), BusError> {
        let inner = self.inner.lock().unwrap();
        let state = inner
            .topics
            .get(topic)
            .ok_or_else(|| BusError::UnknownTopic(topic.to_string()))?;
        Ok((state.log.len() as u64, state.rejections))
    }

    pub fn topic_len(&self, topic: &str) -> Result<u64, BusError> {
        self.topic_stats(topic).map(|(appends, _)| appends)
    }

    /// Broker statistics as CSV: `topic,bus_class,appends,rejections`.
    pub fn stats_csv(&self) -> String {
        let inner = self.inner.lock().unwrap();
        let mut rows: Vec<(String, BusClass, u64, u64)> = inner
            .topics
            .iter()
            .map(|(name, t)| (name.clone(), t.class, t.log.len() as u64, t.rejections))
            .collect();
        rows.sort_by(|a, b| a.0.cmp(&b.0));
        let mut out = String::from("topic,bus_class,appends,rejections\n");
        for (name, class, appends, rejections) in rows {
            out.push_str(&format!("{name},{class},{appends},{rejections}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bus::{FieldKind, Value};
    use crate::payload;

    fn broker_with_topic() -> Broker {
        let b = Broker::new();
        b.create_topic("raw-data", BusClass::Data).unwrap();
        b.register_schema(
            "raw-data",
            vec![
                FieldSpec::required("x", FieldKind::Float),
                FieldSpec::optional("note", FieldKind::Text),
            ],
        )
        .unwrap();
        b
    }

    #[test]
    fn create_topic_rejects_duplicates() {
        let b = Broker::new();
        b.create_topic("raw-data", BusClass::Data).unwrap();
        assert_eq!(
            b.create_topic("raw-data", BusClass::Data),
            Err(BusError::DuplicateTopic("raw-data".into()))
        );
        b.create_topic("model-results", BusClass::Analytics)
            .unwrap();
        assert!(b.stats_csv().contains("model-results,analytics,0,0"));
    }

    #[test]
    fn schema_versions_are_consecutive_and_retrievable() {
        let b = Broker::new();
        b.create_topic("t", BusClass::Data).unwrap();
        let v1 = b
            .register_schema("t", vec![FieldSpec::required("a", FieldKind::Integer)])
            .unwrap();
        assert_eq!(v1, 1);
        let v2 = b
            .register_schema("t", vec![FieldSpec::required("b", FieldKind::Integer)])
            .unwrap();
        assert_eq!(v2, 2);
        assert_eq!(b.schema("t", Some(1)).unwrap().fields[0].name, "a");
        assert_eq!(b.schema("t", None).unwrap().version, 2);
    }

    #[test]
    fn malformed_schema_rejected() {
        let b = Broker::new();
        b.create_topic("t", BusClass::Data).unwrap();
        let dup = vec![
            FieldSpec::required("a", FieldKind::Integer),
            FieldSpec::required("a", FieldKind::Float),
        ];
        assert!(matches!(
            b.register_schema("t", dup),
            Err(BusError::MalformedSchema(_))
        ));
        assert!(matches!(
            b.register_schema("missing", vec![]),
            Err(BusError::UnknownTopic(_))
        ));
    }

    #[test]
    fn publish_assigns_monotone_offsets() {
        let b = broker_with_topic();
        for i in 0..10 {
            let off = b
                .publish("raw-data", payload! {"x" => Value::Float(i as f64)})
                .unwrap();
            assert_eq!(off, i);
        }
    }

    #[test]
    fn publish_rejects_and_counts_nonconforming() {
        let b = broker_with_topic();
        assert_eq!(b.topic_stats("raw-data").unwrap(), (0, 0));
        let err = b.publish("raw-data", payload! {"note" => Value::Text("no x".into())});
        assert!(matches!(err, Err(BusError::SchemaViolation { .. })));
        assert_eq!(b.topic_stats("raw-data").unwrap(), (0, 1));
        // wrong kind
        let err = b.publish("raw-data", payload! {"x" => Value::Text("nan".into())});
        assert!(matches!(err, Err(BusError::SchemaViolation { .. })));
        // unknown field
        let err = b.publish(
            "raw-data",
            payload! {"x" => Value::Float(1.0), "y" => Value::Float(2.0)},
        );
        assert!(matches!(err, Err(BusError::SchemaViolation { .. })));
        assert_eq!(b.topic_stats("raw-data").unwrap(), (0, 3));
        b.publish("raw-data", payload! {"x" => Value::Float(1.0)})
            .unwrap();
        assert_eq!(b.topic_stats("raw-data").unwrap(), (1, 3));
    }

    #[test]
    fn publish_without_schema_errors() {
        let b = Broker::new();
        b.create_topic("t", BusClass::Data).unwrap();
        assert_eq!(
            b.publish("t", Payload::new()),
            Err(BusError::NoSchema("t".into()))
        );
    }

    #[test]
    fn new_group_reads_from_beginning() {
        let b = broker_with_topic();
        for i in 0..5 {
            b.publish("raw-data", payload! {"x" => Value::Float(i as f64)})
                .unwrap();
        }
        let sub = b.subscribe("raw-data", "g1", "m1").unwrap();
        let msgs = b.poll(&sub, 100).unwrap();
        let offsets: Vec<u64> = msgs.iter().map(|m| m.offset).collect();
        assert_eq!(offsets, vec![0, 1, 2, 3, 4]);
        assert!(b.poll(&sub, 100).unwrap().is_empty());
    }

    #[test]
    fn poll_batches_and_recovers_after_downtime() {
        let b = broker_with_topic();
        let sub = b.subscribe("raw-data", "g", "m").unwrap();
        for i in 0..3 {
            b.publish("raw-data", payload! {"x" => Value::Float(i as f64)})
                .unwrap();
        }
        assert_eq!(b.poll(&sub, 2).unwrap().len(), 2);
        assert_eq!(b.poll(&sub, 2).unwrap().len(), 1);
        // consumer idle while the producer keeps appending
        for i in 3..8 {
            b.publish("raw-data", payload! {"x" => Value::Float(i as f64)})
                .unwrap();
        }
        let recovered = b.poll(&sub, 100).unwrap();
        assert_eq!(
            recovered.iter().map(|m| m.offset).collect::<Vec<_>>(),
            vec![3, 4, 5, 6, 7]
        );
    }

    #[test]
    fn two_groups_each_receive_everything() {
        let b = broker_with_topic();
        let s1 = b.subscribe("raw-data", "g1", "m").unwrap();
        let s2 = b.subscribe("raw-data", "g2", "m").unwrap();
        for i in 0..10 {
            b.publish("raw-data", payload! {"x" => Value::Float(i as f64)})
                .unwrap();
        }
        assert_eq!(b.poll(&s1, 100).unwrap().len(), 10);
        assert_eq!(b.poll(&s2, 100).unwrap().len(), 10);
    }

    #[test]
    fn members_of_one_group_split_the_log() {
        let b = broker_with_topic();
        let s1 = b.subscribe("raw-data", "g", "m1").unwrap();
        let s2 = b.subscribe("raw-data", "g", "m2").unwrap();
        for i in 0..10 {
            b.publish("raw-data", payload! {"x" => Value::Float(i as f64)})
                .unwrap();
        }
        let a: Vec<u64> = b.poll(&s1, 100).unwrap().iter().map(|m| m.offset).collect();
        let c: Vec<u64> = b.poll(&s2, 100).unwrap().iter().map(|m| m.offset).collect();
        assert_eq!(a.len() + c.len(), 10);
        let mut all: Vec<u64> = a.iter().chain(c.iter()).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert!(a.iter().all(|o| !c.contains(o)));
    }

    #[test]
    fn duplicate_member_rejected() {
        let b = broker_with_topic();
        b.subscribe("raw-data", "g", "m").unwrap();
        assert!(matches!(
            b.subscribe("raw-data", "g", "m"),
            Err(BusError::DuplicateMember { .. })
        ));
    }

    #[test]
    fn removed_member_handle_goes_stale() {
        let b = broker_with_topic();
        let s1 = b.subscribe("raw-data", "g", "m1").unwrap();
        let s2 = b.subscribe("raw-data", "g", "m2").unwrap();
        for i in 0..6 {
            b.publish("raw-data", payload! {"x" => Value::Float(i as f64)})
                .unwrap();
        }
        b.remove_member(&s1).unwrap();
        assert!(matches!(b.poll(&s1, 1), Err(BusError::StaleHandle { .. })));
        // survivor picks up everything, including re-dealt offsets
        let got: Vec<u64> = b.poll(&s2, 100).unwrap().iter().map(|m| m.offset).collect();
        assert_eq!(got, vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn schema_dir_loading() {
        let dir = tempfile::tempdir().unwrap();
        let doc = r#"{"topic": "raw-data", "fields": [{"name": "x", "kind": "float", "required": true}]}"#;
        std::fs::write(dir.path().join("raw-data.json"), doc).unwrap();
        let b = Broker::new();
        b.create_topic("raw-data", BusClass::Data).unwrap();
        assert_eq!(b.load_schema_dir(dir.path()).unwrap(), 1);
        b.publish("raw-data", payload! {"x" => Value::Float(1.0)})
            .unwrap();
    }
}
