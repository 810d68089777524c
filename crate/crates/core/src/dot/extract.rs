use super::DotError;

/// A `digraph` region located in free-form model output.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DotBlock<'a> {
    pub text: &'a str,
    pub start: usize,
    /// Further complete blocks after this one; they are ignored.
    pub additional_blocks: usize,
}

fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

fn word_at(bytes: &[u8], at: usize, word: &str) -> bool {
    let end = at + word.len();
    end <= bytes.len()
        && bytes[at..end].eq_ignore_ascii_case(word.as_bytes())
        && (at == 0 || !is_word_byte(bytes[at - 1]))
        && (end == bytes.len() || !is_word_byte(bytes[end]))
}

/// Index of the `}` that closes the `{` at `open`. Braces inside quoted
/// strings do not count.
fn matching_brace(bytes: &[u8], open: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_quote = false;
    let mut i = open;
    while i < bytes.len() {
        let b = bytes[i];
        if in_quote {
            match b {
                b'\\' => i += 1,
                b'"' => in_quote = false,
                _ => {}
            }
        } else {
            match b {
                b'"' => in_quote = true,
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        return Some(i);
                    }
                }
                _ => {}
            }
        }
        i += 1;
    }
    None
}

/// `{` following the keyword at `kw_end`, allowing at most one identifier
/// (bare or quoted) in between.
fn header_brace(bytes: &[u8], kw_end: usize) -> Option<usize> {
    let mut i = kw_end;
    let skip_ws = |i: &mut usize| {
        while *i < bytes.len() && bytes[*i].is_ascii_whitespace() {
            *i += 1;
        }
    };
    skip_ws(&mut i);
    if i < bytes.len() && bytes[i] == b'{' {
        return Some(i);
    }
    if i < bytes.len() && bytes[i] == b'"' {
        i += 1;
        while i < bytes.len() && bytes[i] != b'"' {
            if bytes[i] == b'\\' {
                i += 1;
            }
            i += 1;
        }
        i += 1;
    } else {
        let start = i;
        while i < bytes.len() && (is_word_byte(bytes[i]) || bytes[i] == b'.' || bytes[i] >= 0x80) {
            i += 1;
        }
        if i == start {
            return None;
        }
    }
    skip_ws(&mut i);
    (i < bytes.len() && bytes[i] == b'{').then_some(i)
}

fn find_block(text: &str, from: usize) -> Option<(usize, usize)> {
    let bytes = text.as_bytes();
    let mut i = from;
    while i < bytes.len() {
        if word_at(bytes, i, "digraph") {
            if let Some(open) = header_brace(bytes, i + "digraph".len()) {
                if let Some(close) = matching_brace(bytes, open) {
                    let mut start = i;
                    // include a preceding `strict`
                    let before = text[..i].trim_end();
                    if before.len() >= 6 && word_at(bytes, before.len() - 6, "strict") {
                        start = before.len() - 6;
                    }
                    return Some((start, close + 1));
                }
            }
        }
        i += 1;
    }
    None
}

/// Finds the first complete `digraph { ... }` in `text`, e.g. inside a
/// fenced code block surrounded by commentary.
pub fn extract_dot_block(text: &str) -> Result<DotBlock<'_>, DotError> {
    let (start, end) = find_block(text, 0).ok_or(DotError::NoDotBlock)?;
    let mut additional_blocks = 0;
    let mut from = end;
    while let Some((_, next_end)) = find_block(text, from) {
        additional_blocks += 1;
        from = next_end;
    }
    Ok(DotBlock {
        text: &text[start..end],
        start,
        additional_blocks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_block_in_prose() {
        let text = "Sure! Here is the ontology:\n```dot\ndigraph G {\n  a -> b;\n}\n```\nHope this helps.";
        let block = extract_dot_block(text).unwrap();
        assert_eq!(block.text, "digraph G {\n  a -> b;\n}");
        assert_eq!(block.additional_blocks, 0);
    }

    #[test]
    fn braces_in_quotes_do_not_close() {
        let text = r#"digraph { "a}" -> b }"#;
        assert_eq!(extract_dot_block(text).unwrap().text, text);
    }

    #[test]
    fn counts_extra_blocks_and_keeps_strict() {
        let text = "strict digraph { a }\n and also digraph { b }";
        let block = extract_dot_block(text).unwrap();
        assert_eq!(block.text, "strict digraph { a }");
        assert_eq!(block.additional_blocks, 1);
    }

    #[test]
    fn word_boundaries_and_unbalanced() {
        assert_eq!(extract_dot_block("mydigraph { a }").unwrap_err(), DotError::NoDotBlock);
        assert_eq!(extract_dot_block("digraph { a ").unwrap_err(), DotError::NoDotBlock);
        assert_eq!(
            extract_dot_block("a digraph is a thing. digraph { a }").unwrap().text,
            "digraph { a }"
        );
    }
}
