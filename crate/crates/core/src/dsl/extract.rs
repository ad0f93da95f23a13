use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExtractError {
    #[error("no fenced code block in reply")]
    NoFencedBlock,
}

const TAG: &str = "objective-dsl";

struct Block<'a> {
    info: &'a str,
    body: String,
}

fn fence_of(line: &str) -> Option<(char, usize, &str)> {
    let trimmed = line.trim_start_matches(' ');
    if line.len() - trimmed.len() > 3 {
        return None;
    }
    let ch = trimmed.chars().next()?;
    if ch != '`' && ch != '~' {
        return None;
    }
    let len = trimmed.chars().take_while(|&c| c == ch).count();
    (len >= 3).then(|| (ch, len, trimmed[len..].trim()))
}

fn blocks(text: &str) -> Vec<Block<'_>> {
    let mut out = Vec::new();
    let mut lines = text.lines();
    while let Some(line) = lines.next() {
        let Some((ch, len, info)) = fence_of(line) else {
            continue;
        };
        let mut body = String::new();
        for inner in lines.by_ref() {
            if let Some((c2, l2, rest)) = fence_of(inner) {
                if c2 == ch && l2 >= len && rest.is_empty() {
                    break;
                }
            }
            body.push_str(inner);
            body.push('\n');
        }
        // An unclosed fence runs to the end of the reply.
        out.push(Block { info, body });
    }
    out
}

/// Pull the objective text out of a chat reply.
///
/// The first block tagged `objective-dsl` wins; without a tagged block the
/// last fenced block is used.
pub fn extract_fenced(transcript: &str) -> Result<String, ExtractError> {
    let all = blocks(transcript);
    if let Some(b) = all
        .iter()
        .find(|b| b.info.split_whitespace().next() == Some(TAG))
    {
        return Ok(b.body.clone());
    }
    all.last()
        .map(|b| b.body.clone())
        .ok_or(ExtractError::NoFencedBlock)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_tagged_block() {
        let t = "Here you go:\n```objective-dsl\n(objective (term shape.square))\n```\nEnjoy.";
        assert_eq!(
            extract_fenced(t).unwrap(),
            "(objective (term shape.square))\n"
        );
    }

    #[test]
    fn tagged_block_beats_earlier_untagged() {
        let t = "```\nuntagged\n```\ntext\n```objective-dsl\ntagged\n```\n```\nlater\n```";
        assert_eq!(extract_fenced(t).unwrap(), "tagged\n");
    }

    #[test]
    fn last_untagged_block_without_tag() {
        let t = "```python\nfirst\n```\n~~~\nsecond\n~~~\n";
        assert_eq!(extract_fenced(t).unwrap(), "second\n");
    }

    #[test]
    fn prose_only_fails() {
        assert_eq!(
            extract_fenced("I would arrange them in a circle."),
            Err(ExtractError::NoFencedBlock)
        );
    }

    #[test]
    fn longer_fence_contains_shorter() {
        let t = "````objective-dsl\na\n```\nb\n````\n";
        assert_eq!(extract_fenced(t).unwrap(), "a\n```\nb\n");
    }

    #[test]
    fn unclosed_fence_runs_to_end() {
        assert_eq!(extract_fenced("```\nabc\n").unwrap(), "abc\n");
    }
}
