use ddnfs_core::wire::{check_banner, banner, WireError};
use ddnfs_core::{
    generate_keypair, make_document, sign_document, Codec, DocPath, Document, FrameDecoder, GetAnswer, HeadStatus,
    KeyPair, Message, PathPattern, SignatureBlock, Tag, VersionSel,
};
use proptest::prelude::*;

fn keys() -> &'static [KeyPair] {
    static KEYS: std::sync::OnceLock<Vec<KeyPair>> = std::sync::OnceLock::new();
    KEYS.get_or_init(|| {
        (0..4)
            .map(|i| generate_keypair(Some(&[40 + i; 32])).unwrap())
            .collect()
    })
}

fn segment() -> impl Strategy<Value = String> {
    "[^/]{1,6}".prop_filter("dot segments", |s| s != "." && s != "..")
}

fn path() -> impl Strategy<Value = String> {
    prop::collection::vec(segment(), 1..4).prop_map(|segs| format!("/{}", segs.join("/")))
}

fn selector() -> impl Strategy<Value = VersionSel> {
    prop_oneof![
        Just(VersionSel::Active),
        Just(VersionSel::Any),
        (1u64..=u64::MAX).prop_map(VersionSel::Exact),
    ]
}

/// A document with an honestly grown chain of `signers` records.
fn signed() -> impl Strategy<Value = (Document, SignatureBlock)> {
    (path(), 1u64..1000, prop::collection::vec(any::<u8>(), 0..300), 1usize..=4).prop_map(
        |(p, v, content, signers)| {
            let doc = make_document(&p, v, content).unwrap();
            let mut block = SignatureBlock::new(doc.doc_ref());
            let ks = keys();
            block.insert(sign_document(&ks[0], &doc.doc_ref(), None, None).unwrap()).unwrap();
            for i in 1..signers {
                let rec = sign_document(&ks[i], &doc.doc_ref(), Some(&block), Some(ks[i - 1].peer_id())).unwrap();
                block.insert(rec).unwrap();
            }
            (doc, block)
        },
    )
}

fn message() -> impl Strategy<Value = Message> {
    prop_oneof![
        signed().prop_map(|(_, b)| Message::IHave(b)),
        (path(), selector()).prop_map(|(p, version)| Message::Get { path: DocPath::new(p).unwrap(), version }),
        signed().prop_map(|(document, block)| Message::GetAnswer(GetAnswer::Ok { document, block })),
        Just(Message::GetAnswer(GetAnswer::NotFound)),
        Just(Message::GetAnswer(GetAnswer::Denied)),
        (path(), any::<bool>(), selector()).prop_map(|(p, glob, version)| {
            let pattern = if glob { format!("{p}/**") } else { p };
            Message::Head { pattern: PathPattern::new(&pattern).unwrap(), version }
        }),
        (
            prop_oneof![Just(HeadStatus::Ok), Just(HeadStatus::Truncated), Just(HeadStatus::Denied)],
            prop::collection::vec(signed().prop_map(|(_, b)| b), 0..3)
        )
            .prop_map(|(status, entries)| Message::HeadAnswer { status, entries }),
    ]
}

fn tag() -> impl Strategy<Value = Tag> {
    (prop::char::range('a', 'z'), any::<u64>()).prop_map(|(c, n)| Tag::new(c, n))
}

proptest! {
    // 200 cases of up to 100 messages each: roughly 10^4 messages per run.
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn stream_round_trips_under_any_chunking(
        frames in prop::collection::vec((tag(), message()), 1..100),
        cuts in prop::collection::vec(1usize..200, 1..50),
    ) {
        let codec = Codec::default();
        let mut stream = Vec::new();
        let mut encoded = Vec::new();
        for (t, m) in &frames {
            let bytes = codec.encode(t, m).unwrap();
            stream.extend_from_slice(&bytes);
            encoded.push(bytes);
        }

        let mut decoder = FrameDecoder::new(codec);
        let mut out = Vec::new();
        let mut pos = 0;
        let mut cut = cuts.iter().cycle();
        while pos < stream.len() {
            let end = (pos + cut.next().unwrap()).min(stream.len());
            decoder.push(&stream[pos..end]);
            pos = end;
            while let Some(frame) = decoder.next_frame().unwrap() {
                out.push(frame);
            }
        }
        prop_assert_eq!(decoder.buffered(), 0);
        prop_assert_eq!(out.len(), frames.len());
        for ((got, want), bytes) in out.iter().zip(&frames).zip(&encoded) {
            prop_assert_eq!(got, want);
            prop_assert_eq!(&codec.encode(&got.0, &got.1).unwrap(), bytes);
        }
    }

    #[test]
    fn truncated_frames_ask_for_more((t, m) in (tag(), message())) {
        let codec = Codec::default();
        let bytes = codec.encode(&t, &m).unwrap();
        for len in 0..bytes.len() {
            prop_assert!(matches!(codec.decode(&bytes[..len]), Err(WireError::NeedMoreData)));
        }
    }
}

#[test]
fn banner_is_checked() {
    assert_eq!(banner(), "ddnfs/1 sha256 ed25519\r\n");
    assert!(check_banner("ddnfs/1 sha256 ed25519").is_ok());
    assert!(matches!(
        check_banner("ddnfs/2 sha256 ed25519\r\n"),
        Err(WireError::BannerMismatch { .. })
    ));
}
