#pragma once

#include <gmpxx.h>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedwcm/errors.hpp"
#include "fedwcm/rng.hpp"

namespace fedwcm {

// Additively homomorphic public-key scheme (Paillier construction):
// Enc(m) = (1 + m*n) * r^n mod n^2, so Enc(a) * Enc(b) decrypts to a + b.

struct PublicKey {
    mpz_class n;
    mpz_class n_squared;
    std::size_t bits = 0;
};

struct PrivateKey {
    mpz_class n;
    mpz_class n_squared;
    mpz_class lambda;  // lcm(p-1, q-1)
    mpz_class mu;      // lambda^-1 mod n
};

struct KeyPair {
    PublicKey pub;
    PrivateKey priv;
};

namespace detail {

inline mpz_class random_bits(RandomEngine& rng, std::size_t bits) {
    if (bits == 0) throw InputError("random_bits: need at least one bit");
    mpz_class out = 0;
    const std::size_t words = (bits + 63) / 64;
    for (std::size_t w = 0; w < words; ++w) {
        mpz_mul_2exp(out.get_mpz_t(), out.get_mpz_t(), 64);
        const std::uint64_t chunk = rng.next_u64();
        mpz_class piece;
        mpz_import(piece.get_mpz_t(), 1, 1, sizeof(chunk), 0, 0, &chunk);
        out |= piece;
    }
    // Trim to width, then force the top bit so the length is exact.
    mpz_class mask = 1;
    mpz_mul_2exp(mask.get_mpz_t(), mask.get_mpz_t(), bits);
    mask -= 1;
    out &= mask;
    mpz_setbit(out.get_mpz_t(), static_cast<mp_bitcnt_t>(bits - 1));
    return out;
}

// Uniform value in [lo, hi) by rejection on the covering power of two.
inline mpz_class random_range(RandomEngine& rng, const mpz_class& lo, const mpz_class& hi) {
    if (hi <= lo) throw InputError("random_range: empty range");
    const mpz_class span = hi - lo;
    const std::size_t bits = mpz_sizeinbase(span.get_mpz_t(), 2);
    const std::size_t words = (bits + 63) / 64;
    while (true) {
        mpz_class draw = 0;
        for (std::size_t w = 0; w < words; ++w) {
            mpz_mul_2exp(draw.get_mpz_t(), draw.get_mpz_t(), 64);
            const std::uint64_t chunk = rng.next_u64();
            mpz_class piece;
            mpz_import(piece.get_mpz_t(), 1, 1, sizeof(chunk), 0, 0, &chunk);
            draw |= piece;
        }
        mpz_class mask = 1;
        mpz_mul_2exp(mask.get_mpz_t(), mask.get_mpz_t(), bits);
        mask -= 1;
        draw &= mask;
        if (draw < span) return lo + draw;
    }
}

inline bool miller_rabin(const mpz_class& n, RandomEngine& rng, int rounds) {
    if (n < 2) return false;
    for (int small : {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37}) {
        if (n == small) return true;
        if (mpz_divisible_ui_p(n.get_mpz_t(), static_cast<unsigned long>(small))) return false;
    }
    mpz_class d = n - 1;
    mp_bitcnt_t s = mpz_scan1(d.get_mpz_t(), 0);
    mpz_tdiv_q_2exp(d.get_mpz_t(), d.get_mpz_t(), s);
    for (int round = 0; round < rounds; ++round) {
        const mpz_class a = random_range(rng, 2, n - 1);
        mpz_class x;
        mpz_powm(x.get_mpz_t(), a.get_mpz_t(), d.get_mpz_t(), n.get_mpz_t());
        if (x == 1 || x == n - 1) continue;
        bool witness = true;
        for (mp_bitcnt_t i = 0; i + 1 < s; ++i) {
            mpz_powm_ui(x.get_mpz_t(), x.get_mpz_t(), 2, n.get_mpz_t());
            if (x == n - 1) {
                witness = false;
                break;
            }
        }
        if (witness) return false;
    }
    return true;
}

inline mpz_class random_prime(RandomEngine& rng, std::size_t bits) {
    constexpr int kMillerRabinRounds = 40;
    constexpr int kMaxAttempts = 100000;
    if (bits < 8) throw InputError("random_prime: prime width too small");
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        mpz_class candidate = random_bits(rng, bits);
        // Second-highest bit set too, so the product of two primes keeps the
        // full modulus width.
        mpz_setbit(candidate.get_mpz_t(), static_cast<mp_bitcnt_t>(bits - 2));
        mpz_setbit(candidate.get_mpz_t(), 0);
        if (miller_rabin(candidate, rng, kMillerRabinRounds)) return candidate;
    }
    throw ProtocolError("random_prime: no prime found within attempt budget");
}

}  // namespace detail

inline KeyPair keygen(std::size_t modulus_bits, std::uint64_t seed) {
    if (modulus_bits < 128) throw InputError("keygen: modulus must be at least 128 bits");
    RandomEngine rng(seed);
    const std::size_t half = modulus_bits / 2;
    mpz_class p = detail::random_prime(rng, half);
    mpz_class q;
    do {
        q = detail::random_prime(rng, modulus_bits - half);
    } while (q == p);

    KeyPair kp;
    kp.pub.n = p * q;
    kp.pub.n_squared = kp.pub.n * kp.pub.n;
    kp.pub.bits = mpz_sizeinbase(kp.pub.n.get_mpz_t(), 2);

    kp.priv.n = kp.pub.n;
    kp.priv.n_squared = kp.pub.n_squared;
    mpz_lcm(kp.priv.lambda.get_mpz_t(), mpz_class(p - 1).get_mpz_t(),
            mpz_class(q - 1).get_mpz_t());
    if (mpz_invert(kp.priv.mu.get_mpz_t(), kp.priv.lambda.get_mpz_t(),
                   kp.priv.n.get_mpz_t()) == 0) {
        throw ProtocolError("keygen: lambda not invertible mod n");
    }
    return kp;
}

inline mpz_class encrypt(const mpz_class& message, const PublicKey& pk, RandomEngine& rng) {
    if (message < 0 || message >= pk.n) {
        throw InputError("encrypt: message outside plaintext space [0, n)");
    }
    mpz_class r, gcd;
    do {
        r = detail::random_range(rng, 1, pk.n);
        mpz_gcd(gcd.get_mpz_t(), r.get_mpz_t(), pk.n.get_mpz_t());
    } while (gcd != 1);
    mpz_class rn;
    mpz_powm(rn.get_mpz_t(), r.get_mpz_t(), pk.n.get_mpz_t(), pk.n_squared.get_mpz_t());
    mpz_class c = (1 + message * pk.n) % pk.n_squared;
    c = (c * rn) % pk.n_squared;
    return c;
}

inline mpz_class decrypt(const mpz_class& cipher, const PrivateKey& sk) {
    if (cipher < 0 || cipher >= sk.n_squared) {
        throw ProtocolError("decrypt: ciphertext outside [0, n^2)");
    }
    mpz_class x;
    mpz_powm(x.get_mpz_t(), cipher.get_mpz_t(), sk.lambda.get_mpz_t(),
             sk.n_squared.get_mpz_t());
    const mpz_class l = (x - 1) / sk.n;
    return (l * sk.mu) % sk.n;
}

inline mpz_class add_ciphers(const mpz_class& a, const mpz_class& b, const PublicKey& pk) {
    return (a * b) % pk.n_squared;
}

struct CipherVector {
    std::vector<mpz_class> elems;

    std::size_t size() const { return elems.size(); }

    std::size_t byte_size() const {
        std::size_t total = 0;
        for (const auto& c : elems) {
            total += (mpz_sizeinbase(c.get_mpz_t(), 2) + 7) / 8;
        }
        return total;
    }
};

inline CipherVector encrypt_counts(std::span<const long long> counts, const PublicKey& pk,
                                   RandomEngine& rng) {
    CipherVector cv;
    cv.elems.reserve(counts.size());
    for (long long count : counts) {
        if (count < 0) throw InputError("encrypt_counts: counts must be nonnegative");
        cv.elems.push_back(encrypt(mpz_class(static_cast<unsigned long>(count)), pk, rng));
    }
    return cv;
}

inline CipherVector aggregate_ciphers(std::span<const CipherVector> vectors,
                                      const PublicKey& pk) {
    if (vectors.empty()) throw ProtocolError("aggregate_ciphers: nothing to aggregate");
    CipherVector total = vectors.front();
    for (std::size_t v = 1; v < vectors.size(); ++v) {
        if (vectors[v].size() != total.size()) {
            throw ProtocolError("aggregate_ciphers: class count mismatch between uploads");
        }
        for (std::size_t c = 0; c < total.size(); ++c) {
            total.elems[c] = add_ciphers(total.elems[c], vectors[v].elems[c], pk);
        }
    }
    return total;
}

inline std::vector<long long> decrypt_counts(const CipherVector& cv, const PrivateKey& sk) {
    std::vector<long long> counts;
    counts.reserve(cv.size());
    for (const auto& c : cv.elems) {
        const mpz_class m = decrypt(c, sk);
        if (!m.fits_slong_p()) throw ProtocolError("decrypt_counts: count overflows long long");
        counts.push_back(m.get_si());
    }
    return counts;
}

}  // namespace fedwcm
