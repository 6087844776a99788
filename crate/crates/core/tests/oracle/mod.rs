//! Reference implementations written straight from the RFC text, sharing no
//! code with the library. Slow and unhardened; for tests only.

#![allow(dead_code)]

use num_bigint::BigUint;

pub mod lifecycle;

// ---- BLAKE2s-256 (RFC 7693) ----

const B2S_IV: [u32; 8] = [
    0x6A09E667, 0xBB67AE85, 0x3C6EF372, 0xA54FF53A, 0x510E527F, 0x9B05688C, 0x1F83D9AB, 0x5BE0CD19,
];

const SIGMA: [[usize; 16]; 10] = [
    [0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15],
    [14, 10, 4, 8, 9, 15, 13, 6, 1, 12, 0, 2, 11, 7, 5, 3],
    [11, 8, 12, 0, 5, 2, 15, 13, 10, 14, 3, 6, 7, 1, 9, 4],
    [7, 9, 3, 1, 13, 12, 11, 14, 2, 6, 5, 10, 4, 0, 15, 8],
    [9, 0, 5, 7, 2, 4, 10, 15, 14, 1, 11, 12, 6, 8, 3, 13],
    [2, 12, 6, 10, 0, 11, 8, 3, 4, 13, 7, 5, 15, 14, 1, 9],
    [12, 5, 1, 15, 14, 13, 4, 10, 0, 7, 6, 3, 9, 2, 8, 11],
    [13, 11, 7, 14, 12, 1, 3, 9, 5, 0, 15, 4, 8, 6, 2, 10],
    [6, 15, 14, 9, 11, 3, 0, 8, 12, 2, 13, 7, 1, 4, 10, 5],
    [10, 2, 8, 4, 7, 6, 1, 5, 15, 11, 9, 14, 3, 12, 13, 0],
];

fn b2s_compress(h: &mut [u32; 8], block: &[u8; 64], t: u64, last: bool) {
    let m: Vec<u32> = block.chunks(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect();
    let mut v = [0u32; 16];
    v[..8].copy_from_slice(h);
    v[8..].copy_from_slice(&B2S_IV);
    v[12] ^= t as u32;
    v[13] ^= (t >> 32) as u32;
    if last {
        v[14] = !v[14];
    }
    fn g(v: &mut [u32; 16], a: usize, b: usize, c: usize, d: usize, x: u32, y: u32) {
        v[a] = v[a].wrapping_add(v[b]).wrapping_add(x);
        v[d] = (v[d] ^ v[a]).rotate_right(16);
        v[c] = v[c].wrapping_add(v[d]);
        v[b] = (v[b] ^ v[c]).rotate_right(12);
        v[a] = v[a].wrapping_add(v[b]).wrapping_add(y);
        v[d] = (v[d] ^ v[a]).rotate_right(8);
        v[c] = v[c].wrapping_add(v[d]);
        v[b] = (v[b] ^ v[c]).rotate_right(7);
    }
    for s in SIGMA {
        g(&mut v, 0, 4, 8, 12, m[s[0]], m[s[1]]);
        g(&mut v, 1, 5, 9, 13, m[s[2]], m[s[3]]);
        g(&mut v, 2, 6, 10, 14, m[s[4]], m[s[5]]);
        g(&mut v, 3, 7, 11, 15, m[s[6]], m[s[7]]);
        g(&mut v, 0, 5, 10, 15, m[s[8]], m[s[9]]);
        g(&mut v, 1, 6, 11, 12, m[s[10]], m[s[11]]);
        g(&mut v, 2, 7, 8, 13, m[s[12]], m[s[13]]);
        g(&mut v, 3, 4, 9, 14, m[s[14]], m[s[15]]);
    }
    for i in 0..8 {
        h[i] ^= v[i] ^ v[i + 8];
    }
}

pub fn blake2s(data: &[u8]) -> [u8; 32] {
    let mut h = B2S_IV;
    h[0] ^= 0x0101_0000 ^ 32;
    let mut t = 0u64;
    let mut rest = data;
    while rest.len() > 64 {
        t += 64;
        b2s_compress(&mut h, rest[..64].try_into().unwrap(), t, false);
        rest = &rest[64..];
    }
    let mut last = [0u8; 64];
    last[..rest.len()].copy_from_slice(rest);
    t += rest.len() as u64;
    b2s_compress(&mut h, &last, t, true);
    let mut out = [0u8; 32];
    for (i, w) in h.iter().enumerate() {
        out[4 * i..4 * i + 4].copy_from_slice(&w.to_le_bytes());
    }
    out
}

// ---- HMAC / HKDF over BLAKE2s (RFC 2104, RFC 5869) ----

pub fn hmac(key: &[u8], msg: &[u8]) -> [u8; 32] {
    let mut k = [0u8; 64];
    if key.len() > 64 {
        k[..32].copy_from_slice(&blake2s(key));
    } else {
        k[..key.len()].copy_from_slice(key);
    }
    let mut inner: Vec<u8> = k.iter().map(|b| b ^ 0x36).collect();
    inner.extend_from_slice(msg);
    let mut outer: Vec<u8> = k.iter().map(|b| b ^ 0x5c).collect();
    outer.extend_from_slice(&blake2s(&inner));
    blake2s(&outer)
}

pub fn hkdf(ck: &[u8; 32], input: &[u8], n: usize) -> Vec<[u8; 32]> {
    let prk = hmac(ck, input);
    let mut out: Vec<[u8; 32]> = Vec::new();
    for i in 1..=n {
        let mut m = out.last().map(|p| p.to_vec()).unwrap_or_default();
        m.push(i as u8);
        out.push(hmac(&prk, &m));
    }
    out
}

// ---- X25519 (RFC 7748 section 5) ----

fn p25519() -> BigUint {
    (BigUint::from(1u8) << 255u32) - BigUint::from(19u8)
}

fn le_to_big(b: &[u8]) -> BigUint {
    BigUint::from_bytes_le(b)
}

fn big_to_le32(x: &BigUint) -> [u8; 32] {
    let mut out = [0u8; 32];
    let b = x.to_bytes_le();
    out[..b.len()].copy_from_slice(&b);
    out
}

pub fn x25519(scalar: &[u8; 32], u: &[u8; 32]) -> [u8; 32] {
    let p = p25519();
    let mut k = *scalar;
    k[0] &= 248;
    k[31] &= 127;
    k[31] |= 64;
    let k = le_to_big(&k);
    let mut ub = *u;
    ub[31] &= 127;
    let x1 = le_to_big(&ub) % &p;
    let a24 = BigUint::from(121_665u32);
    let sub = |a: &BigUint, b: &BigUint| ((a + &p) - b) % &p;

    let (mut x2, mut z2) = (BigUint::from(1u8), BigUint::from(0u8));
    let (mut x3, mut z3) = (x1.clone(), BigUint::from(1u8));
    let mut swap = false;
    for t in (0..255u64).rev() {
        let kt = k.bit(t);
        if swap ^ kt {
            std::mem::swap(&mut x2, &mut x3);
            std::mem::swap(&mut z2, &mut z3);
        }
        swap = kt;
        let a = (&x2 + &z2) % &p;
        let aa = (&a * &a) % &p;
        let b = sub(&x2, &z2);
        let bb = (&b * &b) % &p;
        let e = sub(&aa, &bb);
        let c = (&x3 + &z3) % &p;
        let d = sub(&x3, &z3);
        let da = (&d * &a) % &p;
        let cb = (&c * &b) % &p;
        let s = (&da + &cb) % &p;
        x3 = (&s * &s) % &p;
        let m = sub(&da, &cb);
        z3 = (&x1 * ((&m * &m) % &p)) % &p;
        x2 = (&aa * &bb) % &p;
        z2 = (&e * ((&aa + (&a24 * &e)) % &p)) % &p;
    }
    if swap {
        std::mem::swap(&mut x2, &mut x3);
        std::mem::swap(&mut z2, &mut z3);
    }
    let inv = z2.modpow(&(&p - BigUint::from(2u8)), &p);
    big_to_le32(&((x2 * inv) % &p))
}

pub fn x25519_base(scalar: &[u8; 32]) -> [u8; 32] {
    let mut nine = [0u8; 32];
    nine[0] = 9;
    x25519(scalar, &nine)
}

// ---- ChaCha20-Poly1305 (RFC 8439) ----

fn chacha_block(key: &[u8; 32], counter: u32, nonce: &[u8; 12]) -> [u8; 64] {
    let mut s = [0u32; 16];
    s[..4].copy_from_slice(&[0x61707865, 0x3320646e, 0x79622d32, 0x6b206574]);
    for i in 0..8 {
        s[4 + i] = u32::from_le_bytes(key[4 * i..4 * i + 4].try_into().unwrap());
    }
    s[12] = counter;
    for i in 0..3 {
        s[13 + i] = u32::from_le_bytes(nonce[4 * i..4 * i + 4].try_into().unwrap());
    }
    let mut w = s;
    fn qr(w: &mut [u32; 16], a: usize, b: usize, c: usize, d: usize) {
        w[a] = w[a].wrapping_add(w[b]);
        w[d] = (w[d] ^ w[a]).rotate_left(16);
        w[c] = w[c].wrapping_add(w[d]);
        w[b] = (w[b] ^ w[c]).rotate_left(12);
        w[a] = w[a].wrapping_add(w[b]);
        w[d] = (w[d] ^ w[a]).rotate_left(8);
        w[c] = w[c].wrapping_add(w[d]);
        w[b] = (w[b] ^ w[c]).rotate_left(7);
    }
    for _ in 0..10 {
        qr(&mut w, 0, 4, 8, 12);
        qr(&mut w, 1, 5, 9, 13);
        qr(&mut w, 2, 6, 10, 14);
        qr(&mut w, 3, 7, 11, 15);
        qr(&mut w, 0, 5, 10, 15);
        qr(&mut w, 1, 6, 11, 12);
        qr(&mut w, 2, 7, 8, 13);
        qr(&mut w, 3, 4, 9, 14);
    }
    let mut out = [0u8; 64];
    for i in 0..16 {
        out[4 * i..4 * i + 4].copy_from_slice(&w[i].wrapping_add(s[i]).to_le_bytes());
    }
    out
}

fn chacha20_xor(key: &[u8; 32], counter: u32, nonce: &[u8; 12], data: &[u8]) -> Vec<u8> {
    data.chunks(64)
        .enumerate()
        .flat_map(|(i, chunk)| {
            let ks = chacha_block(key, counter + i as u32, nonce);
            chunk.iter().zip(ks).map(|(a, b)| a ^ b).collect::<Vec<_>>()
        })
        .collect()
}

fn poly1305(key: &[u8; 32], msg: &[u8]) -> [u8; 16] {
    let mut r = key[..16].to_vec();
    for i in [3, 7, 11, 15] {
        r[i] &= 15;
    }
    for i in [4, 8, 12] {
        r[i] &= 252;
    }
    let r = le_to_big(&r);
    let s = le_to_big(&key[16..]);
    let p = (BigUint::from(1u8) << 130u32) - BigUint::from(5u8);
    let mut acc = BigUint::from(0u8);
    for chunk in msg.chunks(16) {
        let mut n = chunk.to_vec();
        n.push(1);
        acc = ((acc + le_to_big(&n)) * &r) % &p;
    }
    let tag = (acc + s) % (BigUint::from(1u8) << 128u32);
    let mut out = [0u8; 16];
    let b = tag.to_bytes_le();
    out[..b.len()].copy_from_slice(&b);
    out
}

fn pad16(v: &mut Vec<u8>) {
    while v.len() % 16 != 0 {
        v.push(0);
    }
}

pub fn aead_seal(key: &[u8; 32], nonce: &[u8; 12], pt: &[u8], aad: &[u8]) -> Vec<u8> {
    let otk: [u8; 32] = chacha_block(key, 0, nonce)[..32].try_into().unwrap();
    let ct = chacha20_xor(key, 1, nonce, pt);
    let mut mac = aad.to_vec();
    pad16(&mut mac);
    mac.extend_from_slice(&ct);
    pad16(&mut mac);
    mac.extend_from_slice(&(aad.len() as u64).to_le_bytes());
    mac.extend_from_slice(&(ct.len() as u64).to_le_bytes());
    let mut out = ct;
    out.extend_from_slice(&poly1305(&otk, &mac));
    out
}

/// The tunnel's nonce layout: 32 zero bits then the 64-bit LE counter.
pub fn nonce(counter: u64) -> [u8; 12] {
    let mut n = [0u8; 12];
    n[4..].copy_from_slice(&counter.to_le_bytes());
    n
}

// ---- Noise IK, written out message by message ----

pub struct IkTranscript {
    pub initiation: Vec<u8>,
    pub response: Vec<u8>,
    pub initiator_to_responder: [u8; 32],
    pub responder_to_initiator: [u8; 32],
    pub transcript_hash: [u8; 32],
}

fn mix(h: &[u8; 32], data: &[u8]) -> [u8; 32] {
    let mut v = h.to_vec();
    v.extend_from_slice(data);
    blake2s(&v)
}

/// Runs one IK exchange with every random input fixed. Key inputs are raw
/// 32-byte secrets; clamping happens inside `x25519`.
#[allow(clippy::too_many_arguments)]
pub fn noise_ik(
    protocol: &[u8],
    prologue: &[u8],
    s_i: &[u8; 32],
    e_i: &[u8; 32],
    s_r: &[u8; 32],
    e_r: &[u8; 32],
    timestamp: &[u8; 12],
    idx_i: u32,
    idx_r: u32,
) -> IkTranscript {
    let pub_s_i = x25519_base(s_i);
    let pub_e_i = x25519_base(e_i);
    let pub_s_r = x25519_base(s_r);
    let pub_e_r = x25519_base(e_r);

    let mut h = [0u8; 32];
    if protocol.len() <= 32 {
        h[..protocol.len()].copy_from_slice(protocol);
    } else {
        h = blake2s(protocol);
    }
    let mut ck = h;
    h = mix(&h, prologue);
    h = mix(&h, &pub_s_r);

    // -> e
    h = mix(&h, &pub_e_i);
    // -> es
    let o = hkdf(&ck, &x25519(e_i, &pub_s_r), 2);
    ck = o[0];
    let enc_s = aead_seal(&o[1], &nonce(0), &pub_s_i, &h);
    h = mix(&h, &enc_s);
    // -> ss
    let o = hkdf(&ck, &x25519(s_i, &pub_s_r), 2);
    ck = o[0];
    let enc_ts = aead_seal(&o[1], &nonce(0), timestamp, &h);
    h = mix(&h, &enc_ts);

    let mut initiation = vec![1, 0, 0, 0];
    initiation.extend_from_slice(&idx_i.to_le_bytes());
    initiation.extend_from_slice(&pub_e_i);
    initiation.extend_from_slice(&enc_s);
    initiation.extend_from_slice(&enc_ts);

    // <- e
    h = mix(&h, &pub_e_r);
    // <- ee
    ck = hkdf(&ck, &x25519(e_r, &pub_e_i), 1)[0];
    // <- se
    let o = hkdf(&ck, &x25519(e_r, &pub_s_i), 2);
    ck = o[0];
    let tag = aead_seal(&o[1], &nonce(0), &[], &h);
    h = mix(&h, &tag);

    let mut response = vec![2, 0, 0, 0];
    response.extend_from_slice(&idx_r.to_le_bytes());
    response.extend_from_slice(&idx_i.to_le_bytes());
    response.extend_from_slice(&pub_e_r);
    response.extend_from_slice(&tag);

    let keys = hkdf(&ck, &[], 2);
    IkTranscript {
        initiation,
        response,
        initiator_to_responder: keys[0],
        responder_to_initiator: keys[1],
        transcript_hash: h,
    }
}
