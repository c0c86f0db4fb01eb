use serde::{Deserialize, Serialize};

/// How text is split into tokens for counting and for the text metrics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenizerMode {
    /// Each CJK character is a token; maximal letter/digit runs are tokens;
    /// punctuation and whitespace are dropped.
    #[default]
    CjkCharLatinWord,
    Whitespace,
}

impl std::str::FromStr for TokenizerMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cjk" | "cjk-char-latin-word" | "cjk_char_latin_word" => Ok(TokenizerMode::CjkCharLatinWord),
            "whitespace" => Ok(TokenizerMode::Whitespace),
            other => Err(format!("unknown tokenizer mode {other:?}")),
        }
    }
}

pub fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3400..=0x4DBF
        | 0x4E00..=0x9FFF
        | 0xF900..=0xFAFF
        | 0x20000..=0x2FA1F
        | 0x3040..=0x309F
        | 0x30A0..=0x30FF
        | 0xAC00..=0xD7AF)
}

pub fn tokenize(text: &str, mode: TokenizerMode) -> Vec<String> {
    match mode {
        TokenizerMode::Whitespace => text.split_whitespace().map(str::to_string).collect(),
        TokenizerMode::CjkCharLatinWord => {
            let mut tokens = Vec::new();
            let mut run = String::new();
            for c in text.chars() {
                if is_cjk(c) {
                    if !run.is_empty() {
                        tokens.push(std::mem::take(&mut run));
                    }
                    tokens.push(c.to_string());
                } else if c.is_alphanumeric() {
                    run.push(c);
                } else if !run.is_empty() {
                    tokens.push(std::mem::take(&mut run));
                }
            }
            if !run.is_empty() {
                tokens.push(run);
            }
            tokens
        }
    }
}

pub fn count_tokens(text: &str, mode: TokenizerMode) -> usize {
    tokenize(text, mode).len()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> Vec<String> {
        tokenize(s, TokenizerMode::CjkCharLatinWord)
    }

    #[test]
    fn mixed_script() {
        assert_eq!(t("我ok了"), vec!["我", "ok", "了"]);
    }

    #[test]
    fn empty() {
        assert!(t("").is_empty());
    }

    #[test]
    fn latin_words() {
        assert_eq!(t("abc def"), vec!["abc", "def"]);
    }

    #[test]
    fn punctuation_dropped() {
        assert_eq!(t("你好，世界! GPT-4o。"), vec!["你", "好", "世", "界", "GPT", "4o"]);
    }

    #[test]
    fn whitespace_mode_keeps_punctuation() {
        assert_eq!(tokenize("a, b", TokenizerMode::Whitespace), vec!["a,", "b"]);
    }
}
