use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::table::MappingTable;
use crate::error::{Error, Result};
use crate::normalize::is_greek;

/// Writes normalized Greek text in Greeklish.
///
/// The text is split into the longest Greek units the table knows, and
/// each unit is replaced by one of its Latin variants chosen uniformly at
/// random. Characters outside the Greek block are copied.
pub fn synth_greeklish(greek: &str, table: &MappingTable, seed: u64) -> Result<String> {
    let inverse = table.inverse();
    let longest = inverse.keys().map(|g| g.chars().count()).max().unwrap_or(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chars: Vec<char> = greek.chars().collect();
    let mut out = String::with_capacity(greek.len());
    let mut pos = 0;
    while pos < chars.len() {
        if !is_greek(chars[pos]) {
            out.push(chars[pos]);
            pos += 1;
            continue;
        }
        let unit = (1..=longest.min(chars.len() - pos))
            .rev()
            .map(|len| (len, chars[pos..pos + len].iter().collect::<String>()))
            .find_map(|(len, s)| inverse.get(s.as_str()).map(|v| (len, v)));
        let Some((len, variants)) = unit else {
            return Err(Error::UnmappedCharacter(chars[pos]));
        };
        out.push_str(variants[rng.random_range(0..variants.len())]);
        pos += len;
    }
    Ok(out)
}
