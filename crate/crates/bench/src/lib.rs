//! Deterministic synthetic corpora for the benchmarks.

const WORDS: [&str; 48] = [
    "the", "of", "and", "to", "in", "is", "that", "for", "it", "as", "was", "with", "be", "by", "on", "not",
    "he", "this", "are", "or", "his", "from", "at", "which", "but", "have", "an", "had", "they", "you",
    "were", "their", "one", "all", "we", "can", "her", "has", "there", "been", "compression", "tokenizer",
    "entropy", "vocabulary", "merge", "stream", "character", "information",
];

/// Zipf-flavoured word salad of roughly `chars` characters.
pub fn synthetic_text(chars: usize, seed: u64) -> String {
    let mut out = String::with_capacity(chars + 16);
    let mut x = seed.wrapping_mul(2862933555777941757).wrapping_add(3037000493);
    while out.len() < chars {
        x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let u = ((x >> 11) as f64) / ((1u64 << 53) as f64);
        let rank = ((WORDS.len() as f64).powf(u) - 1.0) as usize;
        out.push_str(WORDS[rank.min(WORDS.len() - 1)]);
        out.push(if x.is_multiple_of(17) { '.' } else { ' ' });
    }
    out.truncate(chars);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_sized() {
        assert_eq!(synthetic_text(1000, 1), synthetic_text(1000, 1));
        assert_ne!(synthetic_text(1000, 1), synthetic_text(1000, 2));
        assert_eq!(synthetic_text(1000, 1).len(), 1000);
    }
}
