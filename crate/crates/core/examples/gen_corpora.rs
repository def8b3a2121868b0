//! Regenerates the bundled toy corpora under `crates/core/data/`.
//!
//!     cargo run -p specsteer --example gen_corpora
//!
//! Text comes from small seeded grammars: a broad generalist corpus, a
//! narrower corpus for the generic specialist, and three users whose histories
//! repeat idiosyncratic entities (a restaurant, a trail, a club).

use std::collections::HashSet;
use std::fs;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Grammar = &'static [(&'static str, &'static [&'static str])];

const GENERAL: Grammar = &[
    (
        "S",
        &[
            "i think NP is ADJ .",
            "we went to PLACE on DAY .",
            "the NOUN was ADJ and ADJ .",
            "PERSON said that NP is ADJ .",
            "where should we eat tonight ?",
            "what should we do on DAY ?",
            "let us go to PLACE after work .",
            "the weather on DAY will be WEATHER .",
            "i would like to try NP .",
            "PERSON likes NP very much .",
            "we should eat at PLACE tonight .",
            "the best place for FOOD is PLACE .",
            "my favorite music is GENRE .",
            "we listened to GENRE at PLACE .",
            "they walked to PLACE in the WEATHER weather .",
            "can you recommend a good PLACE ?",
            "the news today was about TOPIC .",
            "people often talk about TOPIC .",
            "a good FOOD needs fresh NOUN .",
            "i read a book about TOPIC on DAY .",
        ],
    ),
    (
        "NP",
        &[
            "the NOUN",
            "a ADJ NOUN",
            "FOOD",
            "the new PLACE",
            "GENRE",
            "TOPIC",
        ],
    ),
    (
        "NOUN",
        &[
            "park", "city", "market", "museum", "movie", "book", "garden", "river", "bread",
            "coffee", "train", "game", "song", "team", "street", "bridge",
        ],
    ),
    (
        "ADJ",
        &[
            "good", "nice", "busy", "quiet", "great", "old", "new", "small", "famous", "cheap",
            "fresh", "long",
        ],
    ),
    (
        "PLACE",
        &[
            "the cafe",
            "the park",
            "the museum",
            "the market",
            "the beach",
            "the library",
            "the restaurant",
            "the diner",
            "the theater",
            "the station",
            "the mall",
            "the pizzeria",
        ],
    ),
    (
        "DAY",
        &[
            "monday",
            "tuesday",
            "friday",
            "saturday",
            "sunday",
            "the weekend",
        ],
    ),
    (
        "PERSON",
        &[
            "my friend",
            "the teacher",
            "my brother",
            "our neighbor",
            "the chef",
            "a doctor",
        ],
    ),
    (
        "FOOD",
        &[
            "pizza", "pasta", "soup", "salad", "sushi", "burgers", "tacos", "noodles", "bread",
            "pancakes",
        ],
    ),
    (
        "GENRE",
        &["rock", "pop", "classical music", "jazz", "folk", "hip hop"],
    ),
    (
        "WEATHER",
        &["sunny", "rainy", "cold", "warm", "windy", "cloudy"],
    ),
    (
        "TOPIC",
        &[
            "sports",
            "politics",
            "science",
            "travel",
            "food",
            "music",
            "history",
            "the economy",
        ],
    ),
];

const SPECIALIST: Grammar = &[
    (
        "S",
        &[
            "you could try PLACE on DAY .",
            "we should eat at PLACE tonight .",
            "where should we eat tonight ?",
            "i would like to try FOOD .",
            "a good choice is PLACE .",
            "maybe go to PLACE after work .",
            "i suggest FOOD at PLACE .",
            "how about PLACE this DAY ?",
        ],
    ),
    (
        "PLACE",
        &[
            "the cafe",
            "the restaurant",
            "the diner",
            "the park",
            "the pizzeria",
            "the market",
        ],
    ),
    ("DAY", &["friday", "saturday", "sunday", "the weekend"]),
    (
        "FOOD",
        &["pizza", "pasta", "soup", "salad", "tacos", "noodles"],
    ),
];

const ALICE: Grammar = &[
    (
        "S",
        &[
            "we should eat at gino's tonight .",
            "i love the carbonara at gino's .",
            "gino's trattoria has the best pasta .",
            "my favorite restaurant is gino's .",
            "let us go to gino's on DAY .",
            "the tiramisu at gino's is great .",
            "i had dinner at gino's with PERSON .",
        ],
    ),
    ("DAY", &["friday", "saturday", "the weekend"]),
    ("PERSON", &["marco", "my sister", "my friend"]),
];

const BOB: Grammar = &[
    (
        "S",
        &[
            "we should hike the ridgeline trail on DAY .",
            "the ridgeline trail was windy and quiet .",
            "i packed my trekking poles for the ridgeline trail .",
            "let us go to the trailhead after work .",
            "the view from eagle peak is great .",
            "my favorite place is eagle peak .",
            "we camped near eagle peak on DAY .",
        ],
    ),
    ("DAY", &["saturday", "sunday", "the weekend"]),
];

const CAROL: Grammar = &[
    (
        "S",
        &[
            "we listened to bebop at the bluenote club .",
            "my favorite music is bebop .",
            "the bluenote club has a great quartet .",
            "let us go to the bluenote club on DAY .",
            "i saw a saxophone quartet at the bluenote club .",
            "we should go to the bluenote club tonight .",
        ],
    ),
    ("DAY", &["friday", "saturday", "the weekend"]),
];

fn expand(g: Grammar, sym: &str, rng: &mut ChaCha8Rng, out: &mut Vec<String>) {
    for word in sym.split(' ') {
        match g.iter().find(|(name, _)| *name == word) {
            Some((_, alts)) => {
                let alt = alts.choose(rng).expect("nonempty rule");
                expand(g, alt, rng, out);
            }
            None => out.push(word.to_string()),
        }
    }
}

/// Lines of roughly `tokens` tokens, a few sentences per line.
fn corpus(g: Grammar, tokens: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lines = Vec::new();
    let mut total = 0;
    while total < tokens {
        let mut words = Vec::new();
        for _ in 0..rng.gen_range(1..=3) {
            expand(g, "S", &mut rng, &mut words);
        }
        total += words.len();
        lines.push(words.join(" "));
    }
    lines
}

fn main() -> std::io::Result<()> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data");
    fs::create_dir_all(&dir)?;
    let sets = [
        ("generalist.txt", corpus(GENERAL, 50_000, 1)),
        ("specialist_base.txt", corpus(SPECIALIST, 8_000, 2)),
        ("user_alice.txt", corpus(ALICE, 600, 3)),
        ("user_bob.txt", corpus(BOB, 600, 4)),
        ("user_carol.txt", corpus(CAROL, 600, 5)),
    ];
    let mut seen = HashSet::new();
    let mut vocab = Vec::new();
    for (name, lines) in &sets {
        for w in lines.iter().flat_map(|l| l.split(' ')) {
            if seen.insert(w.to_string()) {
                vocab.push(w.to_string());
            }
        }
        fs::write(dir.join(name), lines.join("\n") + "\n")?;
    }
    vocab.push("</s>".into());
    vocab.push("<unk>".into());
    fs::write(dir.join("vocab.txt"), vocab.join("\n") + "\n")?;
    println!(
        "wrote {} files, vocabulary of {}",
        sets.len() + 1,
        vocab.len()
    );
    Ok(())
}
