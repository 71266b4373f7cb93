#pragma once

#include <chrono>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fedwcm/errors.hpp"
#include "fedwcm/paillier.hpp"
#include "fedwcm/partition.hpp"
#include "fedwcm/rng.hpp"

namespace fedwcm {

struct ProtocolStep {
    std::string step;
    double millis = 0.0;
    std::size_t bytes_plain = 0;
    std::size_t bytes_cipher = 0;
};

struct ProtocolReport {
    std::vector<ProtocolStep> steps;
    std::size_t key_holder = 0;
    std::size_t modulus_bits = 0;

    std::string to_json() const {
        nlohmann::json rows = nlohmann::json::array();
        for (const auto& s : steps) {
            rows.push_back({{"step", s.step},
                            {"millis", s.millis},
                            {"bytes_plain", s.bytes_plain},
                            {"bytes_cipher", s.bytes_cipher}});
        }
        nlohmann::json doc{{"key_holder", key_holder},
                           {"modulus_bits", modulus_bits},
                           {"steps", rows}};
        return doc.dump(2);
    }
};

// The server's entire interface: it holds public material and multiplies
// ciphertexts. There is no path from here to a plaintext.
class AggregationServer {
  public:
    explicit AggregationServer(PublicKey pk) : pk_(std::move(pk)) {}

    void receive(CipherVector upload) {
        if (!uploads_.empty() && upload.size() != uploads_.front().size()) {
            throw ProtocolError("AggregationServer: upload length mismatch");
        }
        uploads_.push_back(std::move(upload));
    }

    CipherVector aggregated() const {
        return aggregate_ciphers(uploads_, pk_);
    }

    std::size_t upload_count() const { return uploads_.size(); }

  private:
    PublicKey pk_;
    std::vector<CipherVector> uploads_;
};

struct ProtocolResult {
    ClassDistribution distribution;
    ProtocolReport report;
};

// The four-step distribution-gathering protocol: a seeded key-holder client
// generates the key pair, every client uploads its encrypted class counts, the
// server sums them without decrypting, and the key holder decrypts the total.
inline ProtocolResult run_protocol(std::span<const ClientShard> shards,
                                   std::size_t security_bits, std::uint64_t seed) {
    if (shards.empty()) throw ProtocolError("run_protocol: no shards");
    const std::size_t C = shards.front().class_counts.size();
    using clock = std::chrono::steady_clock;
    const auto ms = [](clock::time_point a, clock::time_point b) {
        return std::chrono::duration<double, std::milli>(b - a).count();
    };

    ProtocolResult result;
    result.report.modulus_bits = security_bits;

    RandomEngine holder_rng(mix_seed({seed, 0x6b657968ULL}));
    result.report.key_holder = holder_rng.uniform_index(shards.size());

    auto t0 = clock::now();
    const KeyPair keys = keygen(security_bits, mix_seed({seed, 0x6b657967ULL}));
    auto t1 = clock::now();
    result.report.steps.push_back({"keygen", ms(t0, t1), 0, 0});

    AggregationServer server(keys.pub);
    std::size_t plain_bytes = 0;
    std::size_t cipher_bytes = 0;
    t0 = clock::now();
    for (const auto& shard : shards) {
        if (shard.class_counts.size() != C) {
            throw ProtocolError("run_protocol: inconsistent class counts across shards");
        }
        RandomEngine enc_rng(mix_seed({seed, 0x656e63ULL, shard.client_id}));
        CipherVector upload = encrypt_counts(shard.class_counts, keys.pub, enc_rng);
        plain_bytes += shard.class_counts.size() * sizeof(std::int64_t);
        cipher_bytes += upload.byte_size();
        server.receive(std::move(upload));
    }
    t1 = clock::now();
    result.report.steps.push_back({"encrypt_upload", ms(t0, t1), plain_bytes, cipher_bytes});

    t0 = clock::now();
    const CipherVector total = server.aggregated();
    t1 = clock::now();
    result.report.steps.push_back({"aggregate", ms(t0, t1), 0, total.byte_size()});

    t0 = clock::now();
    std::vector<long long> counts = decrypt_counts(total, keys.priv);
    t1 = clock::now();
    result.report.steps.push_back(
        {"decrypt", ms(t0, t1), counts.size() * sizeof(std::int64_t), 0});

    result.distribution = ClassDistribution::from_counts(std::move(counts));
    return result;
}

}  // namespace fedwcm
