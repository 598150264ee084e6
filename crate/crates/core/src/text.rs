//! Token segmentation and sentence boundaries.

/// Sentence-final punctuation, CJK and ASCII.
pub const SENTENCE_FINAL: &[char] = &['。', '！', '？', '；', '.', '!', '?', ';'];

const CLOSERS: &[char] = &['”', '’', '」', '』', '）', ')', '"', '\''];

/// Number of Unicode scalar values in `s`.
#[inline]
pub fn char_len(s: &str) -> usize {
    s.chars().count()
}

/// Splits text into tokens.
///
/// Whitespace-separated text is treated as pre-segmented. Text without
/// whitespace is one token when pure ASCII, and otherwise falls back to one
/// token per character (punctuation dropped).
pub fn segment(text: &str) -> Vec<String> {
    let text = text.trim();
    if text.is_empty() {
        return Vec::new();
    }
    if text.chars().any(char::is_whitespace) {
        return text.split_whitespace().map(str::to_owned).collect();
    }
    if text.is_ascii() {
        return vec![text.to_owned()];
    }
    text.chars()
        .filter(|c| !is_punct(*c))
        .map(|c| c.to_string())
        .collect()
}

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation()
        || SENTENCE_FINAL.contains(&c)
        || CLOSERS.contains(&c)
        || matches!(c, '，' | '、' | '：' | '「' | '『' | '“' | '‘' | '（' | '《' | '》')
}

/// Splits `text` into sentences; each sentence keeps its terminal punctuation
/// and any closing quotes that follow it. Concatenating the result yields
/// `text` again.
pub fn sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut iter = text.char_indices().peekable();
    while let Some((i, c)) = iter.next() {
        if SENTENCE_FINAL.contains(&c) {
            let mut end = i + c.len_utf8();
            while let Some(&(j, d)) = iter.peek() {
                if CLOSERS.contains(&d) || SENTENCE_FINAL.contains(&d) {
                    end = j + d.len_utf8();
                    iter.next();
                } else {
                    break;
                }
            }
            out.push(&text[start..end]);
            start = end;
        }
    }
    if start < text.len() {
        out.push(&text[start..]);
    }
    out
}
