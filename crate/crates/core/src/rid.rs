//! Record identifiers.
//!
//! A RID is a catalog prefix followed by one or more dash-separated groups of
//! four base-32 digits, e.g. `1-0001` or `1-0001-0000`. The digit alphabet
//! omits `I`, `L`, `O` and `U`. RIDs are assigned from a counter that only
//! moves forward, so no identifier is ever handed out twice.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

const ALPHABET: &[u8; 32] = b"0123456789ABCDEFGHJKMNPQRSTVWXYZ";
const GROUP: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Rid(String);

impl Rid {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Encodes `counter` under `prefix`.
    pub fn encode(prefix: &str, counter: u64) -> Rid {
        let mut digits = Vec::new();
        let mut n = counter;
        loop {
            digits.push(ALPHABET[(n % 32) as usize]);
            n /= 32;
            if n == 0 {
                break;
            }
        }
        while digits.len() % GROUP != 0 {
            digits.push(b'0');
        }
        digits.reverse();
        let mut out = String::with_capacity(prefix.len() + digits.len() + digits.len() / GROUP);
        out.push_str(prefix);
        for chunk in digits.chunks(GROUP) {
            out.push('-');
            out.push_str(std::str::from_utf8(chunk).expect("ascii alphabet"));
        }
        Rid(out)
    }

    pub fn prefix(&self) -> &str {
        self.0.split('-').next().unwrap_or("")
    }

    /// The counter value encoded in the suffix groups.
    pub fn counter(&self) -> u64 {
        self.0
            .split('-')
            .skip(1)
            .flat_map(|g| g.bytes())
            .fold(0u64, |acc, b| {
                let d = ALPHABET.iter().position(|&a| a == b).unwrap_or(0) as u64;
                acc.saturating_mul(32).saturating_add(d)
            })
    }

    pub fn is_valid(s: &str) -> bool {
        let mut parts = s.split('-');
        let prefix = parts.next().unwrap_or("");
        if prefix.is_empty() || !prefix.bytes().all(|b| ALPHABET.contains(&b)) {
            return false;
        }
        let mut groups = 0;
        for g in parts {
            if g.len() != GROUP || !g.bytes().all(|b| ALPHABET.contains(&b)) {
                return false;
            }
            groups += 1;
        }
        groups > 0
    }

    pub fn is_valid_prefix(prefix: &str) -> bool {
        !prefix.is_empty() && prefix.bytes().all(|b| ALPHABET.contains(&b))
    }
}

impl Ord for Rid {
    fn cmp(&self, other: &Self) -> Ordering {
        self.prefix()
            .cmp(other.prefix())
            .then_with(|| self.counter().cmp(&other.counter()))
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Rid {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Rid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for Rid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let upper = s.trim().to_ascii_uppercase();
        if Rid::is_valid(&upper) {
            Ok(Rid(upper))
        } else {
            Err(Error::InvalidArgument(format!("malformed RID `{s}`")))
        }
    }
}

impl TryFrom<String> for Rid {
    type Error = Error;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<Rid> for String {
    fn from(rid: Rid) -> String {
        rid.0
    }
}
