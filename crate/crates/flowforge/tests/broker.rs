use std::collections::BTreeSet;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use flowforge::broker::{Broker, BrokerError};
use proptest::prelude::*;

const SHORT: Duration = Duration::from_millis(20);

#[test]
fn concurrent_publishers_and_three_groups() {
    let broker = Arc::new(Broker::new());
    let publishers: Vec<_> = (0..4)
        .map(|p| {
            let b = broker.clone();
            thread::spawn(move || (0..250).map(|i| b.publish("t", format!("{p}-{i}").into_bytes()).unwrap()).collect::<Vec<_>>())
        })
        .collect();
    let consumers: Vec<_> = (0..3)
        .map(|g| {
            let b = broker.clone();
            thread::spawn(move || {
                let mut sub = b.subscribe("t", &format!("g{g}")).unwrap();
                let mut seen = Vec::new();
                let deadline = Instant::now() + Duration::from_secs(10);
                while seen.len() < 1000 && Instant::now() < deadline {
                    let batch = sub.poll(37, Duration::from_millis(50)).unwrap();
                    if let Some(last) = batch.last() {
                        sub.commit(last.offset).unwrap();
                    }
                    seen.extend(batch.into_iter().map(|m| m.offset));
                }
                seen
            })
        })
        .collect();
    let mut published = BTreeSet::new();
    for p in publishers {
        published.extend(p.join().unwrap());
    }
    assert_eq!(published, (0..1000).collect());
    let mut total = 0;
    for c in consumers {
        let seen = c.join().unwrap();
        total += seen.len();
        assert!(seen.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(seen.iter().copied().collect::<BTreeSet<_>>(), (0..1000).collect());
    }
    assert_eq!(total, 3000);
}

#[test]
fn uncommitted_messages_are_redelivered() {
    let broker = Broker::new();
    for i in 0..10u8 {
        broker.publish("t", vec![i]).unwrap();
    }
    let mut sub = broker.subscribe("t", "g").unwrap();
    let first = sub.poll(4, SHORT).unwrap();
    sub.commit(first[1].offset).unwrap();
    let _more = sub.poll(4, SHORT).unwrap();
    drop(sub);
    let mut again = broker.subscribe("t", "g").unwrap();
    let redelivered = again.poll(100, SHORT).unwrap();
    assert_eq!(redelivered.first().map(|m| m.offset), Some(2));
    assert_eq!(redelivered.len(), 8);
    again.commit(9).unwrap();
    drop(again);
    let mut done = broker.subscribe("t", "g").unwrap();
    assert!(done.poll(10, SHORT).unwrap().is_empty());
}

#[test]
fn commit_rules() {
    let broker = Broker::new();
    for i in 0..3u8 {
        broker.publish("t", vec![i]).unwrap();
    }
    let mut sub = broker.subscribe("t", "g").unwrap();
    assert!(matches!(sub.commit(0), Err(BrokerError::InvalidOffset { offset: 0 })));
    sub.poll(2, SHORT).unwrap();
    sub.commit(1).unwrap();
    sub.commit(0).unwrap();
    assert_eq!(broker.committed("t", "g"), Some(1));
    assert!(sub.commit(2).is_err());
    assert!(matches!(broker.subscribe("t", "g"), Err(BrokerError::GroupBusy { .. })));
    assert!(matches!(sub.poll(0, SHORT), Err(BrokerError::InvalidMax)));
}

#[test]
fn poll_on_empty_topic_times_out_promptly() {
    let broker = Broker::new();
    let mut sub = broker.subscribe("empty", "g").unwrap();
    let t = Instant::now();
    assert!(sub.poll(1, Duration::from_millis(10)).unwrap().is_empty());
    assert!(t.elapsed() < Duration::from_millis(500));
}

#[test]
fn blocked_poll_wakes_on_publish() {
    let broker = Arc::new(Broker::new());
    let mut sub = broker.subscribe("t", "g").unwrap();
    let b = broker.clone();
    let publisher = thread::spawn(move || {
        thread::sleep(Duration::from_millis(30));
        b.publish("t", b"x".to_vec()).unwrap();
    });
    let got = sub.poll(1, Duration::from_secs(5)).unwrap();
    publisher.join().unwrap();
    assert_eq!(got.len(), 1);
}

#[test]
fn retention_cap_drops_oldest() {
    let broker = Broker::with_retention(3);
    for i in 0..5u8 {
        broker.publish("t", vec![i]).unwrap();
    }
    let offsets: Vec<u64> = broker.fetch("t", 0, 10).iter().map(|m| m.offset).collect();
    assert_eq!(offsets, [2, 3, 4]);
    let mut sub = broker.subscribe("t", "g").unwrap();
    assert_eq!(sub.poll(10, SHORT).unwrap()[0].offset, 2);
}

#[derive(Debug, Clone)]
enum Op {
    Publish,
    Poll(usize),
    CommitLast,
    Rejoin,
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![3 => Just(Op::Publish), 2 => (1usize..5).prop_map(Op::Poll), 1 => Just(Op::CommitLast), 1 => Just(Op::Rejoin)]
}

proptest! {
    /// Against a model: deliveries are in order, start after the committed
    /// offset on rejoin, and nothing past the commit is ever skipped.
    #[test]
    fn delivery_follows_committed_offset(ops in prop::collection::vec(op(), 1..60)) {
        let broker = Broker::new();
        let mut published = 0u64;
        let mut committed: i64 = -1;
        let mut position = 0u64;
        let mut last_delivered: Option<u64> = None;
        let mut sub = broker.subscribe("t", "g").unwrap();
        for op in ops {
            match op {
                Op::Publish => {
                    prop_assert_eq!(broker.publish("t", vec![]).unwrap(), published);
                    published += 1;
                }
                Op::Poll(max) => {
                    let got = sub.poll(max, Duration::ZERO).unwrap();
                    let expected: Vec<u64> = (position..published).take(max).collect();
                    let offsets: Vec<u64> = got.iter().map(|m| m.offset).collect();
                    prop_assert_eq!(&offsets, &expected);
                    position += offsets.len() as u64;
                    if let Some(&o) = offsets.last() {
                        last_delivered = Some(o);
                    }
                }
                Op::CommitLast => {
                    if let Some(o) = last_delivered {
                        sub.commit(o).unwrap();
                        committed = committed.max(o as i64);
                    }
                }
                Op::Rejoin => {
                    drop(sub);
                    sub = broker.subscribe("t", "g").unwrap();
                    position = (committed + 1) as u64;
                    last_delivered = None;
                }
            }
            prop_assert_eq!(broker.committed("t", "g"), Some(committed));
            prop_assert!(committed < published as i64);
        }
    }
}
