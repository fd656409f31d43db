#pragma once

// Blocks, canonical encoding, validation and stake rewards.
//
// Canonical block layout (all integers 8-byte big-endian, reals binary64
// big-endian, arrays prefixed by an 8-byte element count):
//
//   round                 i64
//   prev_hash             32 raw bytes
//   has_payload           u64 (0 or 1)
//   [payload]             aggregator_id u64, provider_ids u64[], global_update f64[],
//                         aggregator_signature bytes[]
//   votes                 count, then per vote: stage u64, round i64, candidate_id u64,
//                         candidate_digest 32 raw bytes, vote u64 (0, 1, or 2 = none),
//                         sender_id u64, signature bytes[]
//   stake_increments      count, then (participant_id u64, amount u64) pairs
//   creator_id            u64
//   creator_signature     bytes[]
//
// An empty block therefore encodes to 80 bytes plus its signature length.

#include <fstream>
#include <memory>
#include <optional>
#include <set>

#include <nlohmann/json.hpp>

#include "blockdfl/ledger.hpp"
#include "blockdfl/messages.hpp"
#include "blockdfl/roles.hpp"

namespace blockdfl {

struct ApprovedUpdate {
  ParticipantId aggregator_id = kNoParticipant;
  std::vector<ParticipantId> provider_ids;
  ParameterVector global_update;
  Signature aggregator_signature;

  friend bool operator==(const ApprovedUpdate&, const ApprovedUpdate&) = default;
};

struct StakeIncrement {
  ParticipantId participant_id;
  std::uint64_t amount;
  friend bool operator==(const StakeIncrement&, const StakeIncrement&) = default;
};

struct Block {
  std::int64_t round = -1;
  Hash prev_hash{};
  std::optional<ApprovedUpdate> payload;
  std::vector<ConsensusMsg> votes;
  std::vector<StakeIncrement> stake_increments;
  ParticipantId creator_id = kNoParticipant;
  Signature creator_signature;

  bool empty() const { return !payload.has_value(); }

  friend bool operator==(const Block&, const Block&) = default;
};

namespace detail {

inline void encode_block_body(ByteWriter& w, const Block& b) {
  w.i64(b.round);
  w.raw(b.prev_hash);
  w.u64(b.payload ? 1 : 0);
  if (b.payload) {
    w.u64(b.payload->aggregator_id);
    w.u64_array(b.payload->provider_ids);
    w.f64_array(b.payload->global_update);
    w.blob(b.payload->aggregator_signature);
  }
  w.u64(b.votes.size());
  for (const auto& v : b.votes) {
    w.u64(static_cast<std::uint64_t>(v.stage));
    w.i64(v.round);
    w.u64(v.candidate_id);
    w.raw(v.candidate_digest);
    w.u64(v.vote.has_value() ? (*v.vote ? 1 : 0) : 2);
    w.u64(v.sender_id);
    w.blob(v.signature);
  }
  w.u64(b.stake_increments.size());
  for (const auto& s : b.stake_increments) {
    w.u64(s.participant_id);
    w.u64(s.amount);
  }
  w.u64(b.creator_id);
}

}  // namespace detail

inline Bytes canonical_serialize(const Block& b) {
  ByteWriter w;
  detail::encode_block_body(w, b);
  w.blob(b.creator_signature);
  return std::move(w).bytes();
}

inline Block deserialize_block(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  Block b;
  b.round = r.i64();
  r.raw(b.prev_hash);
  const auto has_payload = r.u64();
  if (has_payload > 1) throw Error("block decode: bad payload flag");
  if (has_payload == 1) {
    ApprovedUpdate p;
    p.aggregator_id = r.u64();
    p.provider_ids = r.u64_array();
    p.global_update = r.f64_array();
    p.aggregator_signature = r.blob();
    b.payload = std::move(p);
  }
  const auto n_votes = r.u64();
  if (n_votes > r.remaining()) throw Error("block decode: truncated votes");
  for (std::uint64_t i = 0; i < n_votes; ++i) {
    ConsensusMsg v;
    const auto stage = r.u64();
    if (stage > 2) throw Error("block decode: bad stage");
    v.stage = static_cast<Stage>(stage);
    v.round = r.i64();
    v.candidate_id = r.u64();
    r.raw(v.candidate_digest);
    const auto bit = r.u64();
    if (bit > 2) throw Error("block decode: bad vote value");
    if (bit < 2) v.vote = bit == 1;
    v.sender_id = r.u64();
    v.signature = r.blob();
    b.votes.push_back(std::move(v));
  }
  const auto n_inc = r.u64();
  if (n_inc > r.remaining() / 16) throw Error("block decode: truncated stake increments");
  for (std::uint64_t i = 0; i < n_inc; ++i) {
    const auto id = r.u64();
    const auto amount = r.u64();
    b.stake_increments.push_back({id, amount});
  }
  b.creator_id = r.u64();
  b.creator_signature = r.blob();
  if (!r.done()) throw Error("block decode: trailing bytes");
  return b;
}

/// Bytes covered by the creator signature: the canonical body without the signature.
inline Bytes block_signing_bytes(const Block& b) {
  ByteWriter w;
  w.text("block");
  detail::encode_block_body(w, b);
  return std::move(w).bytes();
}

inline Hash hash_block(const Block& b) { return sha256(canonical_serialize(b)); }

/// Genesis: round -1, empty, unsigned. Its prev_hash is SHA-256 of the
/// tagged run seed so role selection differs between seeds from round 0.
inline Block make_genesis(std::uint64_t seed) {
  ByteWriter w;
  w.text("blockdfl-genesis");
  w.u64(seed);
  Block g;
  g.round = -1;
  g.prev_hash = sha256(w.bytes());
  return g;
}

inline void sign_block(Block& b, const Signer& signer) { b.creator_signature = signer.sign(b.creator_id, block_signing_bytes(b)); }

struct ChainParams {
  std::size_t n_aggregators = 8;
  std::size_t n_verifiers = 7;
  std::size_t updates_per_global = 5;  // c
  std::uint64_t stake_increment = 5;
};

enum class Verdict {
  accepted,
  bad_round,
  bad_linkage,
  bad_creator,
  bad_creator_signature,
  malformed_empty_block,
  bad_payload,
  bad_aggregator_signature,
  bad_vote,
  bad_vote_signature,
  duplicate_vote,
  insufficient_votes,
  bad_stake_increments,
};

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::accepted: return "accepted";
    case Verdict::bad_round: return "bad_round";
    case Verdict::bad_linkage: return "bad_linkage";
    case Verdict::bad_creator: return "bad_creator";
    case Verdict::bad_creator_signature: return "bad_creator_signature";
    case Verdict::malformed_empty_block: return "malformed_empty_block";
    case Verdict::bad_payload: return "bad_payload";
    case Verdict::bad_aggregator_signature: return "bad_aggregator_signature";
    case Verdict::bad_vote: return "bad_vote";
    case Verdict::bad_vote_signature: return "bad_vote_signature";
    case Verdict::duplicate_vote: return "duplicate_vote";
    case Verdict::insufficient_votes: return "insufficient_votes";
    case Verdict::bad_stake_increments: return "bad_stake_increments";
  }
  return "unknown";
}

/// Exact rational check count > (2/3) * n.
inline bool exceeds_two_thirds(std::size_t count, std::size_t n) { return 3 * count > 2 * n; }
/// Exact rational check count > (1/3) * n.
inline bool exceeds_one_third(std::size_t count, std::size_t n) { return 3 * count > n; }

/// Stake increments a valid non-empty block must carry: every provider of the
/// approved update, its aggregator and every affirmatively-voting verifier,
/// ascending by id.
inline std::vector<StakeIncrement> expected_increments(const Block& b, std::uint64_t amount) {
  std::set<ParticipantId> ids;
  if (!b.payload) return {};
  ids.insert(b.payload->provider_ids.begin(), b.payload->provider_ids.end());
  ids.insert(b.payload->aggregator_id);
  for (const auto& v : b.votes)
    if (v.vote.value_or(false)) ids.insert(v.sender_id);
  std::vector<StakeIncrement> out;
  for (auto id : ids) out.push_back({id, amount});
  return out;
}

inline StakeLedger apply_stake_increments(StakeLedger ledger, const Block& b) {
  for (const auto& inc : b.stake_increments) ledger.award(inc.participant_id, inc.amount);
  return ledger;
}

/// Append-only chain plus the ledger it implies. Validation is a pure
/// function of (block, tip, ledger, params, signer), so every honest holder
/// accepts exactly the same blocks.
class Chain {
 public:
  Chain(ChainParams params, StakeLedger initial, std::shared_ptr<const Signer> signer, std::uint64_t genesis_seed)
      : params_(params), ledger_(std::move(initial)), signer_(std::move(signer)) {
    require(signer_ != nullptr, "chain: signer required");
    blocks_.push_back(make_genesis(genesis_seed));
    tip_hash_ = hash_block(blocks_.back());
  }

  const ChainParams& params() const { return params_; }
  const StakeLedger& ledger() const { return ledger_; }
  const std::vector<Block>& blocks() const { return blocks_; }
  const Hash& tip_hash() const { return tip_hash_; }
  std::int64_t next_round() const { return blocks_.back().round + 1; }
  const Signer& signer() const { return *signer_; }

  /// Roles for the round after the tip.
  RoleAssignment next_roles() const {
    return select_roles(tip_hash_, build_ring(ledger_), params_.n_aggregators, params_.n_verifiers);
  }

  Verdict validate(const Block& b) const { return validate(b, next_roles()); }

  Verdict validate(const Block& b, const RoleAssignment& roles) const {
    if (b.round != next_round()) return Verdict::bad_round;
    if (b.prev_hash != tip_hash_) return Verdict::bad_linkage;
    if (b.creator_id != roles.leader()) return Verdict::bad_creator;
    if (!signer_->knows(b.creator_id) || !signer_->verify(b.creator_id, block_signing_bytes(b), b.creator_signature))
      return Verdict::bad_creator_signature;

    if (b.empty()) {
      if (!b.votes.empty() || !b.stake_increments.empty()) return Verdict::malformed_empty_block;
      return Verdict::accepted;
    }

    const auto& p = *b.payload;
    if (!roles.is_aggregator(p.aggregator_id)) return Verdict::bad_payload;
    if (p.provider_ids.size() != params_.updates_per_global) return Verdict::bad_payload;
    std::set<ParticipantId> providers(p.provider_ids.begin(), p.provider_ids.end());
    if (providers.size() != p.provider_ids.size()) return Verdict::bad_payload;
    for (auto id : p.provider_ids)
      if (!roles.is_provider(id)) return Verdict::bad_payload;
    if (p.global_update.size() != expected_dim_ && expected_dim_ != 0) return Verdict::bad_payload;
    if (!all_finite(p.global_update)) return Verdict::bad_payload;

    CandidateGlobalUpdate cand{b.round, p.aggregator_id, p.global_update, p.provider_ids, p.aggregator_signature};
    if (!cand.verify(*signer_)) return Verdict::bad_aggregator_signature;
    const Hash digest = cand.digest();

    std::set<ParticipantId> voters;
    std::size_t affirmative = 0;
    for (const auto& v : b.votes) {
      if (v.stage != Stage::commit || !v.vote || v.round != b.round || v.candidate_id != p.aggregator_id ||
          v.candidate_digest != digest || !roles.is_verifier(v.sender_id))
        return Verdict::bad_vote;
      if (!v.verify(*signer_)) return Verdict::bad_vote_signature;
      if (!voters.insert(v.sender_id).second) return Verdict::duplicate_vote;
      if (*v.vote) ++affirmative;
    }
    if (!exceeds_two_thirds(affirmative, params_.n_verifiers)) return Verdict::insufficient_votes;
    if (b.stake_increments != expected_increments(b, params_.stake_increment)) return Verdict::bad_stake_increments;
    return Verdict::accepted;
  }

  /// Validates, then appends and applies stake increments.
  Verdict append(Block b) {
    const Verdict v = validate(b);
    if (v != Verdict::accepted) return v;
    if (b.payload && expected_dim_ == 0) expected_dim_ = b.payload->global_update.size();
    ledger_ = apply_stake_increments(std::move(ledger_), b);
    tip_hash_ = hash_block(b);
    blocks_.push_back(std::move(b));
    return v;
  }

  /// Fixes the global update length checked on non-empty blocks.
  void set_update_dim(std::size_t dim) { expected_dim_ = dim; }

 private:
  ChainParams params_;
  StakeLedger ledger_;
  std::shared_ptr<const Signer> signer_;
  std::vector<Block> blocks_;
  Hash tip_hash_{};
  std::size_t expected_dim_ = 0;
};

/// Binary log: per block an 8-byte big-endian length, then the canonical bytes.
inline void export_chain_binary(const std::vector<Block>& blocks, const std::string& path) {
  ByteWriter w;
  for (const auto& b : blocks) w.blob(canonical_serialize(b));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  const auto& bytes = w.bytes();
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path);
}

inline std::vector<Block> import_chain_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  const Bytes bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  ByteReader r(bytes);
  std::vector<Block> blocks;
  while (!r.done()) {
    const Bytes one = r.blob();
    blocks.push_back(deserialize_block(one));
  }
  return blocks;
}

inline nlohmann::json block_to_json(const Block& b) {
  using nlohmann::json;
  json j;
  j["round"] = b.round;
  j["hash"] = to_hex(hash_block(b));
  j["prev_hash"] = to_hex(b.prev_hash);
  if (b.payload) {
    j["payload"] = {{"aggregator_id", b.payload->aggregator_id},
                    {"provider_ids", b.payload->provider_ids},
                    {"global_update", b.payload->global_update},
                    {"aggregator_signature", to_hex(b.payload->aggregator_signature)}};
  } else {
    j["payload"] = nullptr;
  }
  j["votes"] = json::array();
  for (const auto& v : b.votes)
    j["votes"].push_back({{"sender_id", v.sender_id},
                          {"candidate_id", v.candidate_id},
                          {"vote", v.vote.value_or(false)},
                          {"signature", to_hex(v.signature)}});
  j["stake_increments"] = json::array();
  for (const auto& s : b.stake_increments) j["stake_increments"].push_back({s.participant_id, s.amount});
  j["creator_id"] = b.creator_id == kNoParticipant ? json(nullptr) : json(b.creator_id);
  j["creator_signature"] = to_hex(b.creator_signature);
  return j;
}

}  // namespace blockdfl
