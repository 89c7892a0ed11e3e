//! The three reversible zone transformations.
//!
//! All layers are length-preserving and operate on the raw RGB bytes of a
//! zone, read row by row.

use aes::cipher::generic_array::GenericArray;
use aes::cipher::{BlockDecrypt, BlockEncrypt, KeyInit};
use aes::Aes128;
use serde::{Deserialize, Serialize};

use super::keys::{hmac_sha256, LayerKey};
use super::ObfuscateError;

const BLOCK: usize = 16;
const PIXEL: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Algorithm {
    /// AES-128-CBC over whole blocks, keystream-masked tail.
    AesCbc = 1,
    /// Keyed Fisher–Yates shuffle of pixels.
    PixelPermutation = 2,
    /// XOR with an HMAC-SHA256 counter keystream.
    KeystreamXor = 3,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [
        Algorithm::AesCbc,
        Algorithm::PixelPermutation,
        Algorithm::KeystreamXor,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }
}

impl TryFrom<u8> for Algorithm {
    type Error = ObfuscateError;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            1 => Ok(Algorithm::AesCbc),
            2 => Ok(Algorithm::PixelPermutation),
            3 => Ok(Algorithm::KeystreamXor),
            other => Err(ObfuscateError::InvalidInput(format!(
                "unknown algorithm_id {other}"
            ))),
        }
    }
}

impl From<Algorithm> for u8 {
    fn from(a: Algorithm) -> u8 {
        a.id()
    }
}

pub(crate) fn apply(alg: Algorithm, key: &LayerKey, zone_id: u32, bytes: &mut [u8]) {
    match alg {
        Algorithm::AesCbc => cbc_encrypt(key, zone_id, bytes),
        Algorithm::PixelPermutation => permute(key, bytes, false),
        Algorithm::KeystreamXor => xor_keystream(key, bytes),
    }
}

pub(crate) fn invert(alg: Algorithm, key: &LayerKey, zone_id: u32, bytes: &mut [u8]) {
    match alg {
        Algorithm::AesCbc => cbc_decrypt(key, zone_id, bytes),
        Algorithm::PixelPermutation => permute(key, bytes, true),
        Algorithm::KeystreamXor => xor_keystream(key, bytes),
    }
}

fn cbc_iv(key: &LayerKey, zone_id: u32) -> [u8; BLOCK] {
    let mac = hmac_sha256(&key.0, &[b"iv", &zone_id.to_be_bytes()]);
    let mut iv = [0u8; BLOCK];
    iv.copy_from_slice(&mac[..BLOCK]);
    iv
}

/// Masks the `< 16` trailing bytes with AES-ECB(key, last ciphertext block or IV).
fn mask_tail(cipher: &Aes128, chain: &[u8; BLOCK], tail: &mut [u8]) {
    let mut pad = GenericArray::clone_from_slice(chain);
    cipher.encrypt_block(&mut pad);
    for (b, p) in tail.iter_mut().zip(pad.iter()) {
        *b ^= p;
    }
}

fn cbc_encrypt(key: &LayerKey, zone_id: u32, bytes: &mut [u8]) {
    let cipher = Aes128::new(GenericArray::from_slice(&key.0));
    let mut chain = cbc_iv(key, zone_id);
    let full = bytes.len() / BLOCK * BLOCK;
    let (blocks, tail) = bytes.split_at_mut(full);
    for block in blocks.chunks_exact_mut(BLOCK) {
        for (b, c) in block.iter_mut().zip(chain.iter()) {
            *b ^= c;
        }
        cipher.encrypt_block(GenericArray::from_mut_slice(block));
        chain.copy_from_slice(block);
    }
    mask_tail(&cipher, &chain, tail);
}

fn cbc_decrypt(key: &LayerKey, zone_id: u32, bytes: &mut [u8]) {
    let cipher = Aes128::new(GenericArray::from_slice(&key.0));
    let mut chain = cbc_iv(key, zone_id);
    let full = bytes.len() / BLOCK * BLOCK;
    let (blocks, tail) = bytes.split_at_mut(full);
    for block in blocks.chunks_exact_mut(BLOCK) {
        let mut ct = [0u8; BLOCK];
        ct.copy_from_slice(block);
        cipher.decrypt_block(GenericArray::from_mut_slice(block));
        for (b, c) in block.iter_mut().zip(chain.iter()) {
            *b ^= c;
        }
        chain = ct;
    }
    mask_tail(&cipher, &chain, tail);
}

/// Stream of big-endian u64 words taken from `HMAC-SHA256(key, counter_be64)`
/// blocks, counter starting at 0.
struct PrfStream<'a> {
    key: &'a [u8],
    counter: u64,
    block: [u8; 32],
    pos: usize,
}

impl<'a> PrfStream<'a> {
    fn new(key: &'a [u8]) -> Self {
        Self {
            key,
            counter: 0,
            block: [0; 32],
            pos: 32,
        }
    }

    fn next_u64(&mut self) -> u64 {
        if self.pos == 32 {
            self.block = hmac_sha256(self.key, &[&self.counter.to_be_bytes()]);
            self.counter += 1;
            self.pos = 0;
        }
        let mut w = [0u8; 8];
        w.copy_from_slice(&self.block[self.pos..self.pos + 8]);
        self.pos += 8;
        u64::from_be_bytes(w)
    }

    /// Unbiased value in `0..bound` by rejection sampling.
    fn below(&mut self, bound: u64) -> u64 {
        let limit = u64::MAX - (u64::MAX % bound);
        loop {
            let x = self.next_u64();
            if x < limit {
                return x % bound;
            }
        }
    }
}

/// Swap sequence of a Fisher–Yates shuffle over `n` items: for `i` from
/// `n-1` down to 1, swap `i` with `j ∈ [0, i]`.
fn shuffle_swaps(key: &LayerKey, n: usize) -> Vec<(usize, usize)> {
    let mut prf = PrfStream::new(&key.0);
    (1..n)
        .rev()
        .map(|i| (i, prf.below(i as u64 + 1) as usize))
        .collect()
}

fn permute(key: &LayerKey, bytes: &mut [u8], inverse: bool) {
    let n = bytes.len() / PIXEL;
    let swaps = shuffle_swaps(key, n);
    let mut swap_px = |a: usize, b: usize| {
        if a != b {
            for c in 0..PIXEL {
                bytes.swap(a * PIXEL + c, b * PIXEL + c);
            }
        }
    };
    if inverse {
        for &(i, j) in swaps.iter().rev() {
            swap_px(i, j);
        }
    } else {
        for &(i, j) in &swaps {
            swap_px(i, j);
        }
    }
}

fn xor_keystream(key: &LayerKey, bytes: &mut [u8]) {
    for (index, chunk) in bytes.chunks_mut(32).enumerate() {
        let ks = hmac_sha256(&key.0, &[&(index as u64).to_be_bytes()]);
        for (b, k) in chunk.iter_mut().zip(ks.iter()) {
            *b ^= k;
        }
    }
}
