//! Sparse, label-conjoined word features, hashed into a fixed number of
//! buckets.

pub const TEMPLATE_NAME: &str = "spanlab-feat-v1";
pub const DEFAULT_HASH_BITS: u32 = 18;
pub const MAX_HASH_BITS: u32 = 26;

/// Identifies the feature template and hashing scheme. Models and feature
/// sequences must agree on it.
pub fn template_version(hash_bits: u32) -> String {
    format!("{TEMPLATE_NAME}/fnv1a64/{hash_bits}")
}

/// A document's words together with the label the spans should support.
#[derive(Clone, Copy, Debug)]
pub struct LabeledInput<'a> {
    pub words: &'a [String],
    pub label: &'a str,
}

impl<'a> LabeledInput<'a> {
    pub fn new(words: &'a [String], label: &'a str) -> Self {
        LabeledInput { words, label }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureSequence {
    pub template: String,
    /// Active hashed feature ids per word.
    pub positions: Vec<Vec<u32>>,
}

impl FeatureSequence {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn prefix(chars: &[char], k: usize) -> Option<String> {
    (chars.len() >= k).then(|| chars[..k].iter().collect())
}

fn suffix(chars: &[char], k: usize) -> Option<String> {
    (chars.len() >= k).then(|| chars[chars.len() - k..].iter().collect())
}

/// The feature strings active at each word, before hashing.
pub fn feature_strings(input: &LabeledInput<'_>) -> Vec<Vec<String>> {
    let lower: Vec<String> = input.words.iter().map(|w| w.to_lowercase()).collect();
    let label_only = format!("L={}", input.label);
    (0..input.words.len())
        .map(|i| {
            let word = &input.words[i];
            let chars: Vec<char> = lower[i].chars().collect();
            let mut base = Vec::with_capacity(12);
            let prev = if i == 0 { "<s>" } else { &lower[i - 1] };
            let next = lower.get(i + 1).map_or("</s>", String::as_str);
            base.push(format!("w-1={prev}"));
            base.push(format!("w0={}", lower[i]));
            base.push(format!("w+1={next}"));
            for k in 1..=3 {
                if let Some(p) = prefix(&chars, k) {
                    base.push(format!("pre{k}={p}"));
                }
                if let Some(s) = suffix(&chars, k) {
                    base.push(format!("suf{k}={s}"));
                }
            }
            if word.chars().next().is_some_and(char::is_uppercase) {
                base.push("cap=1".into());
            }
            if !word.is_empty() && word.chars().all(|c| c.is_ascii_digit()) {
                base.push("digit=1".into());
            }
            if word.chars().any(|c| !c.is_alphanumeric()) {
                base.push("punct=1".into());
            }

            let mut feats = Vec::with_capacity(2 + 2 * base.len());
            feats.push("bias".to_owned());
            feats.push(label_only.clone());
            feats.extend(base.iter().map(|f| format!("{f}|{label_only}")));
            feats.extend(base);
            feats
        })
        .collect()
}

pub fn hash_feature(feature: &str, hash_bits: u32) -> u32 {
    let mask = (1u64 << hash_bits) - 1;
    (fnv1a64(feature.as_bytes()) & mask) as u32
}

pub fn extract_features(input: &LabeledInput<'_>, hash_bits: u32) -> FeatureSequence {
    let positions = feature_strings(input)
        .into_iter()
        .map(|fs| fs.iter().map(|f| hash_feature(f, hash_bits)).collect())
        .collect();
    FeatureSequence {
        template: template_version(hash_bits),
        positions,
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;

    fn words(ws: &[&str]) -> Vec<String> {
        ws.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn template_example() {
        let ws = words(&["I", "was", "Fired"]);
        let feats = feature_strings(&LabeledInput::new(&ws, "EMPLOYMENT"));
        let f = &feats[2];
        for expected in [
            "w0=fired",
            "suf3=red",
            "pre2=fi",
            "cap=1",
            "w-1=was",
            "w+1=</s>",
            "w0=fired|L=EMPLOYMENT",
            "bias",
            "L=EMPLOYMENT",
        ] {
            assert!(f.iter().any(|x| x == expected), "missing {expected}: {f:?}");
        }
        assert!(!f.iter().any(|x| x.starts_with("digit")));
        // "I" is too short for 2- and 3-character affixes
        assert!(!feats[0].iter().any(|x| x.starts_with("pre2=")));
    }

    #[test]
    fn shape_flags() {
        let ws = words(&["2024", "boss!"]);
        let feats = feature_strings(&LabeledInput::new(&ws, "L"));
        assert!(feats[0].contains(&"digit=1".to_string()));
        assert!(feats[1].contains(&"punct=1".to_string()));
        assert!(!feats[1].contains(&"cap=1".to_string()));
    }

    #[test]
    fn deterministic() {
        let ws = words(&["My", "landlord", "kicked", "me", "out"]);
        let input = LabeledInput::new(&ws, "HOUSING");
        assert_eq!(extract_features(&input, 12), extract_features(&input, 12));
        assert_eq!(extract_features(&input, 12).template, "spanlab-feat-v1/fnv1a64/12");
    }

    #[test]
    fn labels_only_touch_label_features() {
        let ws = words(&["My", "landlord", "kicked", "me", "out"]);
        let a = feature_strings(&LabeledInput::new(&ws, "HOUSING"));
        let b = feature_strings(&LabeledInput::new(&ws, "EMPLOYMENT"));
        for (fa, fb) in a.iter().zip(&b) {
            let sa: HashSet<_> = fa.iter().collect();
            let sb: HashSet<_> = fb.iter().collect();
            for diff in sa.symmetric_difference(&sb) {
                assert!(diff.contains("L="), "{diff} differs but is not label-conditioned");
            }
            let unlabeled = |s: &HashSet<&String>| {
                s.iter().filter(|f| !f.contains("L=")).count()
            };
            assert_eq!(unlabeled(&sa), unlabeled(&sb));
            assert!(sa != sb);
        }
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert!(hash_feature("bias", 4) < 16);
    }
}
