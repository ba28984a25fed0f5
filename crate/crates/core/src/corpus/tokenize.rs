/// Lowercasing word/punctuation tokenizer.
///
/// Words are runs of alphanumerics with inner apostrophes (`i'm`, `don't`);
/// every other non-space character is its own token, except a bracketed
/// annotation such as `[Laughter]`, which stays one token.
pub fn tokenize(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == '[' {
            match annotation_end(&chars, i) {
                Some(end) => {
                    let tok: String = chars[i..=end].iter().collect();
                    out.push(tok.to_lowercase());
                    i = end + 1;
                }
                None => {
                    out.push("[".to_string());
                    i += 1;
                }
            }
        } else if c.is_alphanumeric() {
            let start = i;
            while i < chars.len()
                && (chars[i].is_alphanumeric()
                    || (is_apostrophe(chars[i])
                        && i + 1 < chars.len()
                        && chars[i + 1].is_alphanumeric()))
            {
                i += 1;
            }
            let word: String = chars[start..i]
                .iter()
                .map(|&c| if is_apostrophe(c) { '\'' } else { c })
                .collect();
            out.push(word.to_lowercase());
        } else {
            out.push(c.to_lowercase().collect());
            i += 1;
        }
    }
    out
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '’'
}

/// `[word]` with a non-empty, whitespace-free body counts as an annotation.
fn annotation_end(chars: &[char], start: usize) -> Option<usize> {
    let mut j = start + 1;
    while j < chars.len() {
        match chars[j] {
            ']' if j > start + 1 => return Some(j),
            c if c.is_whitespace() || c == '[' || c == ']' => return None,
            _ => j += 1,
        }
    }
    None
}

/// Joins tokens back into display text: no space before punctuation.
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    for t in tokens {
        let t = t.as_ref();
        let attach = t.len() == 1
            && t.chars()
                .all(|c| matches!(c, '.' | ',' | '?' | '!' | ';' | ':'));
        if !out.is_empty() && !attach {
            out.push(' ');
        }
        out.push_str(t);
    }
    out
}
