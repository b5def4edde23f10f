//! A simulated peer: an honest engine plus an optional deviation applied to
//! its inputs and outputs.

use std::collections::BTreeMap;

use ddnfs_core::engine::{Action, Engine, EngineError};
use ddnfs_core::wire::TagAllocator;
use ddnfs_core::{
    make_document, sign_document, DocPath, Document, DocumentId, GetAnswer, KeyPair, Message, PeerId,
    SignatureBlock, Tag, VersionSel,
};

use crate::config::Behavior;

/// Rounds an equivocator keeps re-sending its two offers.
const EQUIVOCATION_RESEND_ROUNDS: u64 = 3;

struct Shadow {
    /// Variant `i % 2` is what peer index `i` gets to see.
    variants: [(Document, SignatureBlock); 2],
    until_round: u64,
}

pub struct Node {
    pub engine: Engine,
    pub behavior: Behavior,
    keys: KeyPair,
    tags: TagAllocator,
    shadows: BTreeMap<DocumentId, Shadow>,
    flooded: u64,
}

impl Node {
    pub fn new(engine: Engine, behavior: Behavior, keys: KeyPair) -> Self {
        Node {
            engine,
            behavior,
            keys,
            tags: TagAllocator::new('x'),
            shadows: BTreeMap::new(),
            flooded: 0,
        }
    }

    pub fn id(&self) -> PeerId {
        self.engine.me()
    }

    /// Ids of the documents this node equivocated on.
    pub fn equivocations(&self) -> impl Iterator<Item = &DocumentId> {
        self.shadows.keys()
    }

    /// Nothing left to do unless new input arrives.
    pub fn idle(&self, round: u64) -> bool {
        self.engine.campaigns().is_empty()
            && self.engine.outstanding_tags().is_empty()
            && self.shadows.values().all(|s| round >= s.until_round)
    }

    pub fn handle(&mut self, now: u64, from: (usize, PeerId), tag: Tag, msg: Message) -> Vec<Action> {
        match self.behavior {
            Behavior::Equivocate => {
                if let Some(acts) = self.shadow_inbound(from, &tag, &msg) {
                    return acts;
                }
            }
            Behavior::StaleServe => {
                if let Message::Get { path, version: VersionSel::Active | VersionSel::Any } = &msg {
                    if let Some(answer) = self.oldest(path) {
                        return vec![reply(from.1, tag, Message::GetAnswer(answer))];
                    }
                }
            }
            _ => {}
        }
        self.engine.handle_message(now, from.1, tag, msg)
    }

    fn oldest(&self, path: &DocPath) -> Option<GetAnswer> {
        let store = self.engine.store();
        let max = store.max_version(path)?;
        (1..=max).find_map(|v| {
            let id = DocumentId { path: path.clone(), version: v };
            store.get_exact(&id).map(|sd| GetAnswer::Ok {
                document: sd.document.clone(),
                block: sd.block.clone(),
            })
        })
    }

    fn shadow_inbound(&self, from: (usize, PeerId), tag: &Tag, msg: &Message) -> Option<Vec<Action>> {
        match msg {
            Message::IHave(b) if self.shadows.contains_key(&b.doc_ref().id()) => Some(Vec::new()),
            Message::Get { path, version } => {
                let (_, shadow) = self
                    .shadows
                    .iter()
                    .rev()
                    .find(|(id, _)| {
                        &id.path == path
                            && match version {
                                VersionSel::Exact(v) => *v == id.version,
                                _ => true,
                            }
                    })?;
                let (document, block) = shadow.variants[from.0 % 2].clone();
                Some(vec![reply(from.1, tag.clone(), Message::GetAnswer(GetAnswer::Ok { document, block }))])
            }
            _ => None,
        }
    }

    /// Rewrites or suppresses an outgoing message.
    pub fn outbound(&self, msg: Message) -> Option<Message> {
        let me = self.id();
        let strip = |b: SignatureBlock| if b.contains(&me) { b.closure_of([me]) } else { b };
        match (self.behavior, msg) {
            (Behavior::SilentDrop, _) => None,
            (Behavior::StripOffers, Message::IHave(b)) => Some(Message::IHave(strip(b))),
            (Behavior::StripOffers, Message::GetAnswer(GetAnswer::Ok { document, block })) => {
                Some(Message::GetAnswer(GetAnswer::Ok {
                    document,
                    block: strip(block),
                }))
            }
            (Behavior::StripOffers, Message::HeadAnswer { status, entries }) => Some(Message::HeadAnswer {
                status,
                entries: entries.into_iter().map(strip).collect(),
            }),
            (_, m) => Some(m),
        }
    }

    /// `targets` lists every other group member with its simulation index.
    pub fn tick(&mut self, now: u64, round: u64, targets: &[(usize, PeerId)]) -> Vec<Action> {
        let mut acts = Vec::new();
        if let Behavior::Flood { per_round, rounds } = self.behavior {
            if round < rounds {
                for _ in 0..per_round {
                    self.flooded += 1;
                    let path = format!("/flood/{}/{}", self.id().short(), self.flooded);
                    if let Ok((_, more)) = self.engine.inject(now, &path, self.flooded.to_le_bytes().to_vec()) {
                        acts.extend(more);
                    }
                }
            }
        }
        let resend: Vec<DocumentId> = self
            .shadows
            .iter()
            .filter(|(_, s)| round < s.until_round)
            .map(|(id, _)| id.clone())
            .collect();
        for id in resend {
            acts.extend(self.shadow_offers(&id, targets));
        }
        acts.extend(self.engine.tick(now));
        acts
    }

    pub fn inject(
        &mut self,
        now: u64,
        round: u64,
        path: &DocPath,
        body: Vec<u8>,
        targets: &[(usize, PeerId)],
    ) -> Result<(DocumentId, Vec<Action>), EngineError> {
        if self.behavior != Behavior::Equivocate {
            return self.engine.inject(now, path.as_str(), body);
        }
        let stored = self.engine.store().max_version(path).unwrap_or(0);
        let shadowed = self
            .shadows
            .keys()
            .filter(|id| &id.path == path)
            .map(|id| id.version)
            .max()
            .unwrap_or(0);
        let version = stored.max(shadowed) + 1;
        let mut other = body.clone();
        other.extend_from_slice(b" (conflicting)");
        let variant = |content: Vec<u8>| -> Result<(Document, SignatureBlock), EngineError> {
            let doc = make_document(path.as_str(), version, content)?;
            let mut block = SignatureBlock::new(doc.doc_ref());
            block
                .insert(sign_document(&self.keys, &doc.doc_ref(), None, None).expect("fresh block"))
                .expect("fresh block");
            Ok((doc, block))
        };
        let variants = [variant(body)?, variant(other)?];
        let id = variants[0].0.id().clone();
        self.shadows.insert(
            id.clone(),
            Shadow {
                variants,
                until_round: round + EQUIVOCATION_RESEND_ROUNDS,
            },
        );
        let acts = self.shadow_offers(&id, targets);
        Ok((id, acts))
    }

    fn shadow_offers(&mut self, id: &DocumentId, targets: &[(usize, PeerId)]) -> Vec<Action> {
        let shadow = &self.shadows[id];
        targets
            .iter()
            .map(|(i, p)| Action::Send {
                to: *p,
                tag: self.tags.next_tag(),
                message: Message::IHave(shadow.variants[i % 2].1.clone()),
            })
            .collect()
    }
}

fn reply(to: PeerId, tag: Tag, message: Message) -> Action {
    Action::Send { to, tag, message }
}
