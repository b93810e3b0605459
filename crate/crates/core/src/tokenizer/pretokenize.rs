/// Whitespace pre-tokenizer.
///
/// Text is cut in front of every whitespace character that precedes a
/// non-whitespace character, so each word after the first carries its
/// leading whitespace as a marker (`"a b"` gives `"a"`, `" b"`). Longer
/// whitespace runs leave all but their last character as a separate piece
/// (`"x  y"` gives `"x"`, `" "`, `" y"`). Pieces concatenate back to the
/// input exactly.
#[derive(Debug, Clone)]
pub struct Pieces<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Pieces<'a> {
    pub fn new(text: &'a str) -> Self {
        Pieces { text, pos: 0 }
    }
}

impl<'a> Iterator for Pieces<'a> {
    type Item = &'a str;

    fn next(&mut self) -> Option<&'a str> {
        let rest = &self.text[self.pos..];
        if rest.is_empty() {
            return None;
        }
        let ws_end = rest
            .char_indices()
            .find(|(_, c)| !c.is_whitespace())
            .map_or(rest.len(), |(i, _)| i);
        if ws_end == rest.len() {
            self.pos = self.text.len();
            return Some(rest);
        }
        let last_ws = rest[..ws_end].char_indices().last().map_or(0, |(i, _)| i);
        let end = if last_ws > 0 {
            last_ws
        } else {
            rest[ws_end..]
                .char_indices()
                .find(|(_, c)| c.is_whitespace())
                .map_or(rest.len(), |(i, _)| ws_end + i)
        };
        self.pos += end;
        Some(&rest[..end])
    }
}

pub fn pretokenize(text: &str) -> Vec<&str> {
    Pieces::new(text).collect()
}

/// Whitespace-delimited words with markers stripped (word-level view).
pub fn words(text: &str) -> impl Iterator<Item = &str> {
    text.split(char::is_whitespace).filter(|w| !w.is_empty())
}
