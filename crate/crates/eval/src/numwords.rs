//! Cardinal number spelling for 0..=999999.

const ONES: [&str; 20] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
    "eleven", "twelve", "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen",
    "nineteen",
];

const TENS: [&str; 10] = [
    "", "", "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety",
];

/// Upper bound (inclusive) of the conversion range.
pub const MAX_SPELLED: u64 = 999_999;

/// Space-separated English words for `n`. Tens are written without
/// hyphens ("twenty one") so later hyphen handling cannot re-split them.
/// Returns `None` above [`MAX_SPELLED`].
pub fn number_to_words(n: u64) -> Option<String> {
    if n > MAX_SPELLED {
        return None;
    }
    Some(spell(n))
}

fn spell(n: u64) -> String {
    match n {
        0..=19 => ONES[n as usize].to_string(),
        20..=99 => {
            let t = TENS[(n / 10) as usize];
            if n % 10 == 0 {
                t.to_string()
            } else {
                format!("{t} {}", ONES[(n % 10) as usize])
            }
        }
        100..=999 => {
            let head = format!("{} hundred", ONES[(n / 100) as usize]);
            if n % 100 == 0 {
                head
            } else {
                format!("{head} {}", spell(n % 100))
            }
        }
        _ => {
            let head = format!("{} thousand", spell(n / 1000));
            if n % 1000 == 0 {
                head
            } else {
                format!("{head} {}", spell(n % 1000))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn representative_values() {
        assert_eq!(number_to_words(0).unwrap(), "zero");
        assert_eq!(number_to_words(16).unwrap(), "sixteen");
        assert_eq!(number_to_words(21).unwrap(), "twenty one");
        assert_eq!(number_to_words(40).unwrap(), "forty");
        assert_eq!(number_to_words(105).unwrap(), "one hundred five");
        assert_eq!(number_to_words(300).unwrap(), "three hundred");
        assert_eq!(number_to_words(1_000).unwrap(), "one thousand");
        assert_eq!(number_to_words(12_016).unwrap(), "twelve thousand sixteen");
        assert_eq!(
            number_to_words(999_999).unwrap(),
            "nine hundred ninety nine thousand nine hundred ninety nine"
        );
    }

    #[test]
    fn out_of_range_is_none() {
        assert!(number_to_words(1_000_000).is_none());
    }

    #[test]
    fn outputs_are_lowercase_letters_and_spaces() {
        for n in (0..=999_999).step_by(997) {
            let w = number_to_words(n).unwrap();
            assert!(w.chars().all(|c| c.is_ascii_lowercase() || c == ' '), "{n} -> {w}");
        }
    }
}
