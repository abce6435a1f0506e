use crate::domain::LikertRating;

/// First integer token in 1..=5, scanning left to right. Tokens are maximal
/// runs of ASCII digits, so "10" is skipped rather than read as "1".
pub fn parse_rating(text: &str) -> Option<LikertRating> {
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i].is_ascii_digit() {
            let start = i;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            if let Ok(v) = text[start..i].parse::<i64>() {
                if let Ok(r) = LikertRating::new(v) {
                    return Some(r);
                }
            }
        } else {
            i += 1;
        }
    }
    None
}
