/// Splits a sentence into the tokens that span indices refer to.
///
/// Lowercases, splits on whitespace, then peels trailing terminal
/// punctuation off each chunk into tokens of their own, so that
/// `"Build a house."` and `"build a house ."` tokenize identically.
pub fn tokenize(sentence: &str) -> Vec<String> {
    let lowered = sentence.to_lowercase();
    let mut tokens = Vec::new();
    for chunk in lowered.split_whitespace() {
        let mut rest = chunk;
        let mut tail: Vec<char> = Vec::new();
        while rest.chars().count() > 1 {
            match rest.chars().last() {
                Some(c) if is_terminal_punct(c) => {
                    rest = &rest[..rest.len() - c.len_utf8()];
                    tail.push(c);
                }
                _ => break,
            }
        }
        tokens.push(rest.to_string());
        for c in tail.into_iter().rev() {
            tokens.push(c.to_string());
        }
    }
    tokens
}

fn is_terminal_punct(c: char) -> bool {
    matches!(c, '.' | ',' | '!' | '?' | ';' | ':')
}
