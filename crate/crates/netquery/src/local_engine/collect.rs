//! Trace collection: a node learns its surroundings by sending budgeted
//! walks that record ports and come back along the same ports.

use super::topology::{Entry, Port, Trace};
use crate::logic::NodeId;
use crate::simnet::{BitModel, Size};
use std::collections::BTreeMap;

/// Fixed width of a locally consistent label on the wire.
pub const LABEL_BITS: u64 = 16;
/// Width of the per-run random key used without names.
pub const NONCE_BITS: u64 = 32;

/// Which collection a walk belongs to. Tracelists are kept per key so that
/// walks of different collectors never mix.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Key {
    Id(NodeId),
    Label(NodeId),
    Nonce(u32),
    /// One shared tracelist for everybody.
    Unkeyed,
}

impl Key {
    fn size(&self, s: Size, bm: &BitModel) -> Size {
        match self {
            Key::Id(_) => s.ids(bm, 1),
            Key::Label(_) => s.raw(LABEL_BITS),
            Key::Nonce(_) => s.raw(NONCE_BITS),
            Key::Unkeyed => s,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CollectMsg {
    Walk { key: Key, budget: u32, trace: Trace },
    Reply { key: Key, trace: Trace, entries: Vec<Entry> },
}

pub(crate) fn entry_size(e: &Entry, s: Size, bm: &BitModel, named_by_id: bool) -> Size {
    let ports = e.trace.len() + e.tracelist.iter().map(Vec::len).sum::<usize>();
    let s = s.ports(bm, ports).raw(BitModel::TAG * e.unary.len() as u64);
    match (e.name, named_by_id) {
        (None, _) => s,
        (Some(_), true) => s.ids(bm, 1),
        (Some(_), false) => s.raw(LABEL_BITS),
    }
}

impl CollectMsg {
    pub fn size(&self, bm: &BitModel) -> Size {
        match self {
            // the budget is a hop counter
            CollectMsg::Walk { key, trace, .. } => key.size(Size::tag(), bm).ids(bm, 1).ports(bm, trace.len()),
            CollectMsg::Reply { key, trace, entries } => {
                let by_id = matches!(key, Key::Id(_));
                let s = key.size(Size::tag(), bm).ports(bm, trace.len());
                entries.iter().fold(s, |s, e| entry_size(e, s, bm, by_id))
            }
        }
    }
}

/// Per-node state of the collection protocol: it serves everybody's walks
/// and runs at most one collection of its own.
#[derive(Clone, Debug)]
pub struct Collector {
    pub key: Key,
    name: Option<NodeId>,
    unary: Vec<String>,
    degree: usize,
    lists: BTreeMap<Key, Vec<Trace>>,
    /// Walks forwarded from here, waiting for their replies.
    pending: BTreeMap<(Key, Trace), (usize, Vec<Entry>)>,
    own: Option<(usize, Vec<Entry>)>,
    /// The collected entries, once every walk has returned.
    pub result: Option<Vec<Entry>>,
}

impl Collector {
    pub fn new(key: Key, name: Option<NodeId>, unary: Vec<String>, degree: usize) -> Collector {
        Collector { key, name, unary, degree, lists: BTreeMap::new(), pending: BTreeMap::new(), own: None, result: None }
    }

    fn entry(&self, key: &Key, trace: Trace) -> Entry {
        Entry {
            trace,
            tracelist: self.lists.get(key).cloned().unwrap_or_default(),
            name: self.name,
            unary: self.unary.clone(),
        }
    }

    fn finish_own(&mut self, mut entries: Vec<Entry>) {
        let mut me = self.entry(&self.key.clone(), Vec::new());
        me.tracelist.push(Vec::new());
        entries.push(me);
        self.result = Some(entries);
    }

    /// Start exploring `hops` hops around this node.
    pub fn begin(&mut self, hops: u32) -> Vec<(usize, CollectMsg)> {
        assert!(hops >= 1 && self.own.is_none() && self.result.is_none());
        if self.degree == 0 {
            self.finish_own(Vec::new());
            return Vec::new();
        }
        self.own = Some((self.degree, Vec::new()));
        (1..=self.degree)
            .map(|p| (p, CollectMsg::Walk { key: self.key.clone(), budget: hops - 1, trace: vec![p as Port] }))
            .collect()
    }

    /// Handle one round's collection messages (arrival port, message).
    pub fn handle(&mut self, inbox: Vec<(usize, CollectMsg)>) -> Vec<(usize, CollectMsg)> {
        let mut out = Vec::new();
        let mut walks = Vec::new();
        let mut replies = Vec::new();
        for (port, m) in inbox {
            match m {
                CollectMsg::Walk { key, budget, mut trace } => {
                    trace.push(port as Port);
                    self.lists.entry(key.clone()).or_default().push(trace.clone());
                    walks.push((port, key, budget, trace));
                }
                CollectMsg::Reply { key, trace, entries } => replies.push((key, trace, entries)),
            }
        }
        for (port, key, budget, trace) in walks {
            if budget > 0 && self.degree > 1 {
                for p in (1..=self.degree).filter(|&p| p != port) {
                    let mut t = trace.clone();
                    t.push(p as Port);
                    out.push((p, CollectMsg::Walk { key: key.clone(), budget: budget - 1, trace: t }));
                }
                self.pending.insert((key, trace), (self.degree - 1, Vec::new()));
            } else {
                let e = self.entry(&key, trace.clone());
                out.push((port, CollectMsg::Reply { key, trace, entries: vec![e] }));
            }
        }
        for (key, trace, entries) in replies {
            if trace.len() == 2 {
                let (left, acc) = self.own.as_mut().expect("reply to a collection never started");
                acc.extend(entries);
                *left -= 1;
                if *left == 0 {
                    let (_, acc) = self.own.take().unwrap();
                    self.finish_own(acc);
                }
                continue;
            }
            let parent = trace[..trace.len() - 2].to_vec();
            let slot = (key, parent);
            let (left, acc) = self.pending.get_mut(&slot).expect("reply to an unknown walk");
            acc.extend(entries);
            *left -= 1;
            if *left == 0 {
                let ((key, parent), (_, acc)) = self.pending.remove_entry(&slot).unwrap();
                let mut all = vec![self.entry(&key, parent.clone())];
                all.extend(acc);
                let port = *parent.last().unwrap() as usize;
                out.push((port, CollectMsg::Reply { key, trace: parent, entries: all }));
            }
        }
        out
    }

    /// No walk of anybody's is waiting here.
    pub fn idle(&self) -> bool {
        self.pending.is_empty() && self.own.is_none()
    }
}
