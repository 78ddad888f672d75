//! Bit-packed code storage and Hamming-distance retrieval.
//!
//! Row `i` of a [`PackedCodes`] occupies `ceil(k/8)` bytes. Bit `j` of a
//! code lives in byte `j / 8` at bit position `j % 8` (LSB first); a set bit
//! means `+1`, a clear bit `−1`. Pad bits in the last byte are zero.
//!
//! Code files start with the magic `DAGH`, then little-endian `u32`
//! version (1), `u32 k`, `u64 n`, followed by the `n · ceil(k/8)` payload
//! bytes in row order.

use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hashnet::BinaryCode;

pub const MAGIC: &[u8; 4] = b"DAGH";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedCodes {
    n: usize,
    k: usize,
    data: Vec<u8>,
}

fn row_bytes(k: usize) -> usize {
    k.div_ceil(8)
}

fn pack_into(code: &[i8], out: &mut [u8]) {
    for (j, &b) in code.iter().enumerate() {
        if b > 0 {
            out[j / 8] |= 1 << (j % 8);
        }
    }
}

/// Packs a single code into its row bytes.
pub fn pack_code(code: &BinaryCode) -> Vec<u8> {
    let mut out = vec![0u8; row_bytes(code.len())];
    pack_into(code.as_slice(), &mut out);
    out
}

/// Packs equal-length codes.
pub fn pack(codes: &[BinaryCode]) -> Result<PackedCodes> {
    let k = codes.first().map_or(0, BinaryCode::len);
    if let Some((i, c)) = codes.iter().enumerate().find(|(_, c)| c.len() != k) {
        return Err(Error::invalid(format!(
            "ragged codes: row {i} has length {}, expected {k}",
            c.len()
        )));
    }
    let rb = row_bytes(k);
    let mut data = vec![0u8; rb * codes.len()];
    for (code, row) in codes.iter().zip(data.chunks_exact_mut(rb.max(1))) {
        pack_into(code.as_slice(), row);
    }
    Ok(PackedCodes {
        n: codes.len(),
        k,
        data,
    })
}

/// Inverse of [`pack`].
pub fn unpack(packed: &PackedCodes) -> Vec<BinaryCode> {
    (0..packed.n).map(|i| packed.code(i)).collect()
}

impl PackedCodes {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn code_length(&self) -> usize {
        self.k
    }

    pub fn bytes_per_row(&self) -> usize {
        row_bytes(self.k)
    }

    pub fn row(&self, i: usize) -> &[u8] {
        let rb = self.bytes_per_row();
        &self.data[i * rb..(i + 1) * rb]
    }

    pub fn payload(&self) -> &[u8] {
        &self.data
    }

    pub fn code(&self, i: usize) -> BinaryCode {
        let row = self.row(i);
        let bits = (0..self.k)
            .map(|j| if row[j / 8] >> (j % 8) & 1 == 1 { 1 } else { -1 })
            .collect();
        BinaryCode::new(bits).expect("bits are ±1")
    }

    /// Serialized file contents.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.k as u32).to_le_bytes());
        out.extend_from_slice(&(self.n as u64).to_le_bytes());
        out.extend_from_slice(&self.data);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
            return Err(Error::Format("missing DAGH magic header".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
        let version = u32_at(4);
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported code file version {version}")));
        }
        let k = u32_at(8) as usize;
        let n = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let rb = row_bytes(k);
        let payload = &bytes[HEADER_LEN..];
        if payload.len() != n * rb {
            return Err(Error::Format(format!(
                "payload has {} bytes, header declares {n} codes of {k} bits ({} bytes)",
                payload.len(),
                n * rb
            )));
        }
        if k % 8 != 0 {
            let mask = !((1u8 << (k % 8)) - 1);
            if let Some(i) = payload.chunks_exact(rb).position(|row| row[rb - 1] & mask != 0) {
                return Err(Error::Format(format!("row {i} has non-zero pad bits")));
            }
        }
        Ok(Self {
            n,
            k,
            data: payload.to_vec(),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

/// Number of differing positions.
pub fn hamming_distance(a: &BinaryCode, b: &BinaryCode) -> Result<u32> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "code lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.as_slice().iter().zip(b.as_slice()).filter(|(x, y)| x != y).count() as u32)
}

/// XOR + popcount over packed rows, eight bytes at a time.
pub fn packed_distance(a: &[u8], b: &[u8]) -> u32 {
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    let mut d = 0;
    for (x, y) in (&mut ca).zip(&mut cb) {
        let x = u64::from_le_bytes(x.try_into().expect("8 bytes"));
        let y = u64::from_le_bytes(y.try_into().expect("8 bytes"));
        d += (x ^ y).count_ones();
    }
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        d += (x ^ y).count_ones();
    }
    d
}

/// Gallery ordering for one query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankingResult {
    pub query_id: usize,
    /// Gallery ids by ascending distance, ties by ascending id.
    pub ids: Vec<usize>,
    pub distances: Vec<u32>,
}

impl RankingResult {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

fn check_query(query: &BinaryCode, gallery: &PackedCodes) -> Result<()> {
    if query.len() != gallery.k {
        return Err(Error::invalid(format!(
            "query has {} bits, gallery codes have {}",
            query.len(),
            gallery.k
        )));
    }
    Ok(())
}

fn rank_packed(query_id: usize, q: &[u8], k: usize, gallery: &PackedCodes) -> RankingResult {
    // counting sort over distances keeps ids ascending within each bucket
    let dists: Vec<u32> = (0..gallery.n).map(|i| packed_distance(q, gallery.row(i))).collect();
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); k + 1];
    for (i, &d) in dists.iter().enumerate() {
        buckets[d as usize].push(i);
    }
    let ids: Vec<usize> = buckets.into_iter().flatten().collect();
    let distances = ids.iter().map(|&i| dists[i]).collect();
    RankingResult {
        query_id,
        ids,
        distances,
    }
}

/// Ranks the whole gallery by Hamming distance to `query`.
pub fn rank_gallery(query: &BinaryCode, gallery: &PackedCodes) -> Result<RankingResult> {
    check_query(query, gallery)?;
    Ok(rank_packed(0, &pack_code(query), gallery.k, gallery))
}

/// Ranks the gallery for every query; result `i` belongs to query `i`.
pub fn rank_queries(queries: &PackedCodes, gallery: &PackedCodes) -> Result<Vec<RankingResult>> {
    if queries.k != gallery.k {
        return Err(Error::invalid(format!(
            "query codes have {} bits, gallery codes have {}",
            queries.k, gallery.k
        )));
    }
    Ok((0..queries.n)
        .into_par_iter()
        .map(|i| rank_packed(i, queries.row(i), gallery.k, gallery))
        .collect())
}

/// Gallery ids within Hamming distance `radius` of `query`, ascending.
pub fn within_radius(query: &BinaryCode, gallery: &PackedCodes, radius: usize) -> Result<Vec<usize>> {
    check_query(query, gallery)?;
    if radius > gallery.k {
        return Err(Error::invalid(format!(
            "radius {radius} exceeds code length {}",
            gallery.k
        )));
    }
    let q = pack_code(query);
    Ok((0..gallery.n)
        .filter(|&i| packed_distance(&q, gallery.row(i)) as usize <= radius)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn code(bits: &[i8]) -> BinaryCode {
        BinaryCode::new(bits.to_vec()).unwrap()
    }

    fn random_code(rng: &mut ChaCha8Rng, k: usize) -> BinaryCode {
        code(&(0..k).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect::<Vec<_>>())
    }

    #[test]
    fn hamming_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = random_code(&mut rng, 48);
        let neg = code(&a.as_slice().iter().map(|b| -b).collect::<Vec<_>>());
        assert_eq!(hamming_distance(&a, &a).unwrap(), 0);
        assert_eq!(hamming_distance(&a, &neg).unwrap(), 48);
        assert_eq!(hamming_distance(&code(&[1, -1, 1, 1]), &code(&[1, 1, 1, -1])).unwrap(), 2);
        assert!(hamming_distance(&code(&[1]), &code(&[1, 1])).is_err());
    }

    #[test]
    fn pack_examples() {
        assert_eq!(pack(&[code(&[1; 8])]).unwrap().payload(), &[0xFF]);
        assert_eq!(pack(&[code(&[-1; 8])]).unwrap().payload(), &[0x00]);
        let p = pack(&[code(&[1; 12])]).unwrap();
        assert_eq!(p.payload(), &[0xFF, 0x0F]);
        let mut bits = vec![-1i8; 8];
        bits[0] = 1;
        bits[3] = 1;
        assert_eq!(pack_code(&code(&bits)), vec![0b0000_1001]);
        assert!(pack(&[code(&[1, 1]), code(&[1])]).is_err());
    }

    #[test]
    fn ranking_examples() {
        let g = pack(&[code(&[1, 1, 1, 1]), code(&[1, -1, 1, 1])]).unwrap();
        let r = rank_gallery(&code(&[1, -1, -1, -1]), &g).unwrap();
        assert_eq!(r.ids, vec![1, 0]);
        assert_eq!(r.distances, vec![2, 3]);
        let r = rank_gallery(&code(&[1, -1, 1, 1]), &g).unwrap();
        assert_eq!((r.ids[0], r.distances[0]), (1, 0));
        assert!(rank_gallery(&code(&[1]), &g).is_err());
    }

    #[test]
    fn ties_break_by_id() {
        let g = pack(&[code(&[1, 1]), code(&[-1, -1]), code(&[1, 1])]).unwrap();
        let r = rank_gallery(&code(&[1, -1]), &g).unwrap();
        assert_eq!(r.ids, vec![0, 1, 2]);
        assert_eq!(r.distances, vec![1, 1, 1]);
    }

    #[test]
    fn radius_edges() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let codes: Vec<BinaryCode> = (0..30).map(|_| random_code(&mut rng, 10)).collect();
        let g = pack(&codes).unwrap();
        assert_eq!(within_radius(&codes[3], &g, 10).unwrap(), (0..30).collect::<Vec<_>>());
        let exact = within_radius(&codes[3], &g, 0).unwrap();
        assert!(exact.contains(&3));
        assert!(exact.iter().all(|&i| codes[i] == codes[3]));
        assert!(within_radius(&codes[3], &g, 11).is_err());
    }

    #[test]
    fn file_round_trip_and_validation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let codes: Vec<BinaryCode> = (0..7).map(|_| random_code(&mut rng, 12)).collect();
        let p = pack(&codes).unwrap();
        let bytes = p.to_bytes();
        assert_eq!(&bytes[..4], b"DAGH");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &12u32.to_le_bytes());
        assert_eq!(&bytes[12..20], &7u64.to_le_bytes());
        assert_eq!(PackedCodes::from_bytes(&bytes).unwrap(), p);

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(PackedCodes::from_bytes(&bad).is_err());
        let mut pad = bytes.clone();
        pad[HEADER_LEN + 1] |= 0x80;
        assert!(matches!(PackedCodes::from_bytes(&pad), Err(Error::Format(_))));
        assert!(PackedCodes::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    proptest! {
        #[test]
        fn pack_unpack_round_trip(k in 1usize..70, n in 0usize..6, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let codes: Vec<BinaryCode> = (0..n).map(|_| random_code(&mut rng, k)).collect();
            let p = pack(&codes).unwrap();
            if n > 0 {
                prop_assert_eq!(unpack(&p), codes);
            }
            prop_assert_eq!(PackedCodes::from_bytes(&p.to_bytes()).unwrap(), p);
        }

        #[test]
        fn packed_distance_matches_definition(k in 1usize..100, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_code(&mut rng, k);
            let b = random_code(&mut rng, k);
            let d = hamming_distance(&a, &b).unwrap();
            prop_assert_eq!(packed_distance(&pack_code(&a), &pack_code(&b)), d);
            let dot: i64 = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (*x as i64) * (*y as i64)).sum();
            prop_assert_eq!(2 * d as i64, k as i64 - dot);
        }

        #[test]
        fn hamming_is_a_metric(k in 1usize..40, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (a, b, c) = (random_code(&mut rng, k), random_code(&mut rng, k), random_code(&mut rng, k));
            let ab = hamming_distance(&a, &b).unwrap();
            prop_assert_eq!(ab, hamming_distance(&b, &a).unwrap());
            prop_assert_eq!(ab == 0, a == b);
            prop_assert!(ab <= hamming_distance(&a, &c).unwrap() + hamming_distance(&c, &b).unwrap());
        }
    }
}
