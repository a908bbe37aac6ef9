use crate::error::{Error, Result};
use crate::types::{EntitySet, LabelSet, Segment};

/// `B-`/`I-`/`O` tags for a set of entities over `len` tokens.
pub fn bio_encode(entities: &EntitySet, len: usize, labels: &LabelSet) -> Vec<String> {
    let mut tags = vec!["O".to_string(); len];
    for e in entities {
        let name = labels.name(e.label);
        tags[e.start - 1] = format!("B-{name}");
        for t in &mut tags[e.start..e.end] {
            *t = format!("I-{name}");
        }
    }
    tags
}

/// Entities of a BIO tag sequence. An `I-X` that does not continue an
/// entity of type `X` starts a new one, so every tag sequence over known
/// types decodes.
pub fn bio_decode<S: AsRef<str>>(tags: &[S], labels: &LabelSet) -> Result<EntitySet> {
    let mut out = Vec::new();
    let mut open: Option<Segment> = None;
    for (k, tag) in tags.iter().enumerate() {
        let pos = k + 1;
        let tag = tag.as_ref();
        if tag == "O" {
            out.extend(open.take());
            continue;
        }
        let (prefix, name) = tag
            .split_once('-')
            .ok_or_else(|| Error::InvalidLabels(format!("malformed tag `{tag}`")))?;
        let label = labels
            .index_of(name)
            .filter(|&l| !labels.is_null(l))
            .ok_or_else(|| Error::InvalidLabels(format!("unknown entity type `{name}`")))?;
        match (prefix, &mut open) {
            ("I", Some(cur)) if cur.label == label => cur.end = pos,
            ("B", _) | ("I", _) => {
                out.extend(open.take());
                open = Some(Segment::new(pos, pos, label));
            }
            _ => return Err(Error::InvalidLabels(format!("malformed tag `{tag}`"))),
        }
    }
    out.extend(open);
    EntitySet::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labels() -> LabelSet {
        LabelSet::with_null("O", ["LOC", "PER"]).unwrap()
    }

    #[test]
    fn decode_basic() {
        let e = bio_decode(&["B-PER", "I-PER", "O", "B-LOC"], &labels()).unwrap();
        assert_eq!(e.as_slice(), &[Segment::new(1, 2, 2), Segment::new(4, 4, 1)]);
    }

    #[test]
    fn stray_inside_tags_are_repaired() {
        let e = bio_decode(&["I-PER", "I-LOC", "I-LOC", "O", "I-PER"], &labels()).unwrap();
        assert_eq!(
            e.as_slice(),
            &[Segment::new(1, 1, 2), Segment::new(2, 3, 1), Segment::new(5, 5, 2)]
        );
        let adjacent = bio_decode(&["B-PER", "B-PER"], &labels()).unwrap();
        assert_eq!(adjacent.len(), 2);
    }

    #[test]
    fn bad_tags_are_errors() {
        assert!(bio_decode(&["B-XYZ"], &labels()).is_err());
        assert!(bio_decode(&["PER"], &labels()).is_err());
        assert!(bio_decode(&["E-PER"], &labels()).is_err());
        assert!(bio_decode(&["B-O"], &labels()).is_err());
    }

    fn tag_strategy() -> impl Strategy<Value = Vec<String>> {
        prop::collection::vec(
            prop::sample::select(vec!["O", "B-LOC", "I-LOC", "B-PER", "I-PER"]),
            0..20,
        )
        .prop_map(|v| v.into_iter().map(String::from).collect())
    }

    proptest! {
        #[test]
        fn encode_decode_round_trip(tags in tag_strategy()) {
            let l = labels();
            let e = bio_decode(&tags, &l).unwrap();
            let canonical = bio_encode(&e, tags.len(), &l);
            let e2 = bio_decode(&canonical, &l).unwrap();
            prop_assert_eq!(&e2, &e);
            prop_assert_eq!(bio_encode(&e2, tags.len(), &l), canonical);
        }
    }
}
