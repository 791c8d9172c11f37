//! Dictionary-encoded knowledge graph.
//!
//! Entities, relations and entity types are interned into dense ids assigned
//! in first-appearance order. A [`KnowledgeGraph`] is immutable once built and
//! carries the membership indexes every evaluation protocol needs: exact
//! `(h, r, t)` lookup plus `(h, r) -> tails` and `(r, t) -> heads` lists that
//! span all three splits.

use std::collections::{HashMap, HashSet};
use std::fmt;

use indexmap::IndexSet;
use serde::{Deserialize, Serialize};

use crate::error::{KgError, Result};

macro_rules! dense_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub struct $name(pub u32);

        impl $name {
            #[inline]
            pub fn index(self) -> usize {
                self.0 as usize
            }

            #[inline]
            pub fn from_index(i: usize) -> Self {
                $name(u32::try_from(i).expect("id overflows u32"))
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

dense_id!(
    /// Dense entity index, contiguous from 0.
    EntityId
);
dense_id!(
    /// Dense relation index, contiguous from 0.
    RelationId
);
dense_id!(
    /// Dense entity-type index.
    TypeId
);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: EntityId, relation: RelationId, tail: EntityId) -> Self {
        Triple {
            head,
            relation,
            tail,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

/// Bijective string <-> dense id map; ids follow insertion order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocab {
    names: IndexSet<String>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the id of `name`, interning it if unseen.
    pub fn intern(&mut self, name: &str) -> usize {
        if let Some(i) = self.names.get_index_of(name) {
            return i;
        }
        self.names.insert_full(name.to_owned()).0
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.names.get_index_of(name)
    }

    pub fn name(&self, id: usize) -> &str {
        self.names
            .get_index(id)
            .map(String::as_str)
            .expect("vocabulary id out of range")
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> + '_ {
        self.names.iter().map(String::as_str)
    }

    /// SHA-256 over the newline-joined names, hex encoded. Used to bind
    /// checkpoints to the vocabulary they were trained against.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        for name in &self.names {
            hasher.update(name.as_bytes());
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }
}

/// What to do with valid/test triples whose symbols never occur in train.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClosurePolicy {
    #[default]
    Reject,
    Drop,
}

/// Counters gathered while assembling a graph.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildStats {
    pub duplicates: usize,
    pub dropped_unseen: usize,
    pub skipped_type_rows: usize,
    pub skipped_mediator_rows: usize,
}

/// Accumulates named triples, types and mediator flags, then freezes them
/// into a [`KnowledgeGraph`].
#[derive(Debug, Default)]
pub struct GraphBuilder {
    entities: Vocab,
    relations: Vocab,
    types: Vocab,
    triples: Vec<Triple>,
    splits: Vec<Split>,
    seen: HashMap<Triple, Split>,
    cross_split: Vec<(Triple, Split, Split)>,
    entity_types: HashMap<EntityId, Vec<TypeId>>,
    mediators: HashSet<EntityId>,
    stats: BuildStats,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a triple. Returns `false` when it was already present in the same
    /// split (counted as a duplicate). A triple repeated in a different split
    /// is remembered and rejected by [`GraphBuilder::build`].
    pub fn add(&mut self, head: &str, relation: &str, tail: &str, split: Split) -> bool {
        let h = EntityId::from_index(self.entities.intern(head));
        let r = RelationId::from_index(self.relations.intern(relation));
        let t = EntityId::from_index(self.entities.intern(tail));
        self.add_ids(Triple::new(h, r, t), split)
    }

    fn add_ids(&mut self, triple: Triple, split: Split) -> bool {
        match self.seen.get(&triple) {
            Some(&prev) if prev == split => {
                self.stats.duplicates += 1;
                false
            }
            Some(&prev) => {
                self.cross_split.push((triple, prev, split));
                false
            }
            None => {
                self.seen.insert(triple, split);
                self.triples.push(triple);
                self.splits.push(split);
                true
            }
        }
    }

    /// Declares an entity only if the builder does not know it yet. Useful to
    /// pin vocabulary order before triples are added.
    pub fn declare_entity(&mut self, name: &str) -> EntityId {
        EntityId::from_index(self.entities.intern(name))
    }

    pub fn declare_relation(&mut self, name: &str) -> RelationId {
        RelationId::from_index(self.relations.intern(name))
    }

    /// Attaches a type to a known entity. Unknown entities are skipped with a
    /// warning and counted.
    pub fn add_type(&mut self, entity: &str, type_name: &str) -> bool {
        let Some(e) = self.entities.id(entity) else {
            log::warn!("types: unknown entity `{entity}` skipped");
            self.stats.skipped_type_rows += 1;
            return false;
        };
        let ty = TypeId::from_index(self.types.intern(type_name));
        let list = self.entity_types.entry(EntityId::from_index(e)).or_default();
        if !list.contains(&ty) {
            list.push(ty);
        }
        true
    }

    pub fn add_mediator(&mut self, entity: &str) -> bool {
        let Some(e) = self.entities.id(entity) else {
            log::warn!("mediators: unknown entity `{entity}` skipped");
            self.stats.skipped_mediator_rows += 1;
            return false;
        };
        self.mediators.insert(EntityId::from_index(e));
        true
    }

    pub fn stats(&self) -> &BuildStats {
        &self.stats
    }

    pub fn build(self, policy: ClosurePolicy) -> Result<KnowledgeGraph> {
        let GraphBuilder {
            entities,
            relations,
            types,
            mut triples,
            mut splits,
            cross_split,
            entity_types,
            mediators,
            mut stats,
            ..
        } = self;

        if !cross_split.is_empty() {
            let examples = cross_split
                .iter()
                .take(5)
                .map(|(t, a, b)| {
                    format!(
                        "{}\t{}\t{} ({} and {})",
                        entities.name(t.head.index()),
                        relations.name(t.relation.index()),
                        entities.name(t.tail.index()),
                        a.name(),
                        b.name()
                    )
                })
                .collect();
            return Err(KgError::DuplicateAcrossSplits {
                count: cross_split.len(),
                examples,
            });
        }

        let mut train_entities = vec![false; entities.len()];
        let mut train_relations = vec![false; relations.len()];
        for (t, s) in triples.iter().zip(&splits) {
            if *s == Split::Train {
                train_entities[t.head.index()] = true;
                train_entities[t.tail.index()] = true;
                train_relations[t.relation.index()] = true;
            }
        }
        let unseen = |t: &Triple| {
            !train_entities[t.head.index()]
                || !train_entities[t.tail.index()]
                || !train_relations[t.relation.index()]
        };
        let violating: Vec<usize> = (0..triples.len())
            .filter(|&i| splits[i] != Split::Train && unseen(&triples[i]))
            .collect();
        if !violating.is_empty() {
            match policy {
                ClosurePolicy::Reject => {
                    let examples = violating
                        .iter()
                        .take(5)
                        .map(|&i| {
                            let t = triples[i];
                            format!(
                                "{}\t{}\t{} ({})",
                                entities.name(t.head.index()),
                                relations.name(t.relation.index()),
                                entities.name(t.tail.index()),
                                splits[i].name()
                            )
                        })
                        .collect();
                    return Err(KgError::NotTransductive {
                        count: violating.len(),
                        examples,
                    });
                }
                ClosurePolicy::Drop => {
                    log::warn!(
                        "dropping {} evaluation triple(s) with symbols unseen in train",
                        violating.len()
                    );
                    stats.dropped_unseen = violating.len();
                    let drop: HashSet<usize> = violating.into_iter().collect();
                    let mut i = 0;
                    triples.retain(|_| {
                        let keep = !drop.contains(&i);
                        i += 1;
                        keep
                    });
                    let mut i = 0;
                    splits.retain(|_| {
                        let keep = !drop.contains(&i);
                        i += 1;
                        keep
                    });
                }
            }
        }

        let mut type_table = vec![Vec::new(); entities.len()];
        for (e, mut list) in entity_types {
            list.sort_unstable();
            type_table[e.index()] = list;
        }
        let mut mediator_flags = vec![false; entities.len()];
        for e in mediators {
            mediator_flags[e.index()] = true;
        }

        Ok(KnowledgeGraph::assemble(
            entities,
            relations,
            types,
            triples,
            splits,
            type_table,
            mediator_flags,
            stats,
        ))
    }
}

/// Immutable triple store shared by every protocol.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    entities: Vocab,
    relations: Vocab,
    types: Vocab,
    triples: Vec<Triple>,
    splits: Vec<Split>,
    entity_types: Vec<Vec<TypeId>>,
    mediators: Vec<bool>,
    members: HashSet<Triple>,
    tails_of: HashMap<(EntityId, RelationId), Vec<EntityId>>,
    heads_of: HashMap<(RelationId, EntityId), Vec<EntityId>>,
    stats: BuildStats,
}

impl KnowledgeGraph {
    #[allow(clippy::too_many_arguments)]
    fn assemble(
        entities: Vocab,
        relations: Vocab,
        types: Vocab,
        triples: Vec<Triple>,
        splits: Vec<Split>,
        entity_types: Vec<Vec<TypeId>>,
        mediators: Vec<bool>,
        stats: BuildStats,
    ) -> Self {
        let mut members = HashSet::with_capacity(triples.len());
        let mut tails_of: HashMap<_, Vec<EntityId>> = HashMap::new();
        let mut heads_of: HashMap<_, Vec<EntityId>> = HashMap::new();
        for t in &triples {
            members.insert(*t);
            tails_of.entry((t.head, t.relation)).or_default().push(t.tail);
            heads_of.entry((t.relation, t.tail)).or_default().push(t.head);
        }
        for v in tails_of.values_mut().chain(heads_of.values_mut()) {
            v.sort_unstable();
        }
        KnowledgeGraph {
            entities,
            relations,
            types,
            triples,
            splits,
            entity_types,
            mediators,
            members,
            tails_of,
            heads_of,
            stats,
        }
    }

    pub fn entities(&self) -> &Vocab {
        &self.entities
    }

    pub fn relations(&self) -> &Vocab {
        &self.relations
    }

    pub fn type_vocab(&self) -> &Vocab {
        &self.types
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn splits(&self) -> &[Split] {
        &self.splits
    }

    pub fn stats(&self) -> &BuildStats {
        &self.stats
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    /// Triples tagged with `split`, in list order.
    pub fn split_triples(&self, split: Split) -> impl Iterator<Item = Triple> + '_ {
        self.triples
            .iter()
            .zip(&self.splits)
            .filter(move |(_, s)| **s == split)
            .map(|(t, _)| *t)
    }

    pub fn split_len(&self, split: Split) -> usize {
        self.splits.iter().filter(|s| **s == split).count()
    }

    /// True iff `(h, r, t)` occurs in any split.
    pub fn contains(&self, h: EntityId, r: RelationId, t: EntityId) -> bool {
        self.members.contains(&Triple::new(h, r, t))
    }

    /// Known tails of `(h, r, ?)` across all splits, sorted by id.
    pub fn tails_of(&self, h: EntityId, r: RelationId) -> &[EntityId] {
        self.tails_of.get(&(h, r)).map_or(&[], Vec::as_slice)
    }

    /// Known heads of `(?, r, t)` across all splits, sorted by id.
    pub fn heads_of(&self, r: RelationId, t: EntityId) -> &[EntityId] {
        self.heads_of.get(&(r, t)).map_or(&[], Vec::as_slice)
    }

    /// Sorted type ids of `e`; empty when the entity is untyped.
    pub fn entity_types(&self, e: EntityId) -> &[TypeId] {
        &self.entity_types[e.index()]
    }

    pub fn has_types(&self) -> bool {
        self.entity_types.iter().any(|t| !t.is_empty())
    }

    /// Whether two entities have at least one type in common.
    pub fn shares_type(&self, a: EntityId, b: EntityId) -> bool {
        let (x, y) = (self.entity_types(a), self.entity_types(b));
        let (mut i, mut j) = (0, 0);
        while i < x.len() && j < y.len() {
            match x[i].cmp(&y[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => return true,
            }
        }
        false
    }

    pub fn is_mediator(&self, e: EntityId) -> bool {
        self.mediators[e.index()]
    }

    pub fn mediator_count(&self) -> usize {
        self.mediators.iter().filter(|m| **m).count()
    }

    pub fn entity_name(&self, e: EntityId) -> &str {
        self.entities.name(e.index())
    }

    pub fn relation_name(&self, r: RelationId) -> &str {
        self.relations.name(r.index())
    }

    pub fn entity_id(&self, name: &str) -> Option<EntityId> {
        self.entities.id(name).map(EntityId::from_index)
    }

    pub fn relation_id(&self, name: &str) -> Option<RelationId> {
        self.relations.id(name).map(RelationId::from_index)
    }

    pub fn type_names(&self, e: EntityId) -> impl Iterator<Item = &str> + '_ {
        self.entity_types(e)
            .iter()
            .map(move |t| self.types.name(t.index()))
    }

    /// Renders a triple with vocabulary names.
    pub fn describe(&self, t: Triple) -> String {
        format!(
            "{}\t{}\t{}",
            self.entity_name(t.head),
            self.relation_name(t.relation),
            self.entity_name(t.tail)
        )
    }

    /// Copies every triple (with `split_of` deciding its tag), plus types and
    /// mediator flags of the entities that survive, into a fresh builder.
    /// Vocabularies are rebuilt in first-appearance order over the new list.
    pub(crate) fn rebuild<I>(&self, triples: I) -> GraphBuilder
    where
        I: IntoIterator<Item = (Triple, Split)>,
    {
        let mut b = GraphBuilder::new();
        for (t, s) in triples {
            b.add(
                self.entity_name(t.head),
                self.relation_name(t.relation),
                self.entity_name(t.tail),
                s,
            );
        }
        self.copy_annotations(&mut b);
        b
    }

    pub(crate) fn copy_annotations(&self, b: &mut GraphBuilder) {
        for e in 0..self.num_entities() {
            let id = EntityId::from_index(e);
            let name = self.entity_name(id);
            if b.entities.id(name).is_none() {
                continue;
            }
            for ty in self.type_names(id) {
                b.add_type(name, ty);
            }
            if self.is_mediator(id) {
                b.add_mediator(name);
            }
        }
    }
}
