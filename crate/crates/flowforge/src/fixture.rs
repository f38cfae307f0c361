//! Deterministic OpenFlights-format routes generator.
//!
//! Airports and airlines are drawn from Zipf-like weights so a handful of hubs
//! carry most routes. After string indexing, those hubs sit at small index
//! values and k-means puts most rows into one dominant cluster.

use std::fmt::Write as _;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const ROUTES_HEADER: &str =
    "airline,airlineId,sourceAirport,sourceAirportId,destinationAirport,destinationAirportId,codeshare,stops,equipment";

const AIRPORTS: [&str; 48] = [
    "LHR", "FRA", "CDG", "AMS", "IST", "MAD", "FCO", "MUC", "BCN", "LGW", "DME", "SVO", "ZRH", "CPH", "VIE", "OSL",
    "ARN", "DUB", "BRU", "LIS", "ATH", "HEL", "WAW", "PRG", "MXP", "BUD", "OTP", "KBP", "SIN", "DXB", "DOH", "JFK",
    "ORD", "ATL", "LAX", "PEK", "HND", "ICN", "BKK", "DEL", "GRU", "JNB", "SYD", "YYZ", "MEX", "CAI", "NBO", "AER",
];

const AIRLINES: [&str; 20] = [
    "FR", "U2", "LH", "BA", "AF", "KL", "TK", "IB", "AZ", "SK", "LX", "OS", "AY", "LO", "SU", "W6", "VY", "EI", "TP",
    "A3",
];

const EQUIPMENT: [&str; 8] = ["320", "319", "738", "321", "73H", "E90", "CR9", "333"];

fn zipf_weights(n: usize, s: f64) -> Vec<f64> {
    (1..=n).map(|r| 1.0 / (r as f64).powf(s)).collect()
}

/// Generates `rows` routes as CSV text with a header line.
pub fn routes_csv(rows: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let airport = WeightedIndex::new(zipf_weights(AIRPORTS.len(), 1.2)).expect("positive weights");
    let airline = WeightedIndex::new(zipf_weights(AIRLINES.len(), 1.0)).expect("positive weights");
    let mut out = String::with_capacity(rows * 40);
    out.push_str(ROUTES_HEADER);
    out.push('\n');
    for _ in 0..rows {
        let a = airline.sample(&mut rng);
        let src = airport.sample(&mut rng);
        let mut dst = airport.sample(&mut rng);
        while dst == src {
            dst = airport.sample(&mut rng);
        }
        let codeshare = if rng.random_bool(0.2) { "Y" } else { "" };
        let stops = u8::from(rng.random_bool(0.05));
        let equipment = EQUIPMENT[rng.random_range(0..EQUIPMENT.len())];
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            AIRLINES[a],
            100 + a * 37,
            AIRPORTS[src],
            1000 + src * 13,
            AIRPORTS[dst],
            1000 + dst * 13,
            codeshare,
            stops,
            equipment
        )
        .expect("writing to a String");
    }
    out
}
