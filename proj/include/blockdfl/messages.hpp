#pragma once

// Signed wire messages exchanged inside a round. Every signature covers a
// canonical big-endian encoding that starts with a domain tag.

#include <optional>

#include "blockdfl/compression.hpp"
#include "blockdfl/crypto.hpp"

namespace blockdfl {

struct LocalUpdateMsg {
  std::int64_t round = 0;
  ParticipantId provider_id = kNoParticipant;
  SparseUpdate update;
  Signature signature;

  Bytes signing_bytes() const {
    ByteWriter w;
    w.text("local-update");
    w.i64(round);
    w.u64(provider_id);
    update.encode(w);
    return std::move(w).bytes();
  }

  void sign(const Signer& s) { signature = s.sign(provider_id, signing_bytes()); }
  bool verify(const Signer& s) const { return s.knows(provider_id) && s.verify(provider_id, signing_bytes(), signature); }
};

struct CandidateGlobalUpdate {
  std::int64_t round = 0;
  ParticipantId aggregator_id = kNoParticipant;
  ParameterVector update;
  std::vector<ParticipantId> provider_ids;
  Signature signature;

  Bytes signing_bytes() const {
    ByteWriter w;
    w.text("global-update");
    w.i64(round);
    w.u64(aggregator_id);
    w.u64_array(provider_ids);
    w.f64_array(update);
    return std::move(w).bytes();
  }

  Hash digest() const { return sha256(signing_bytes()); }
  void sign(const Signer& s) { signature = s.sign(aggregator_id, signing_bytes()); }
  bool verify(const Signer& s) const {
    return s.knows(aggregator_id) && s.verify(aggregator_id, signing_bytes(), signature);
  }
};

enum class Stage : std::uint64_t { pre_prepare = 0, prepare = 1, commit = 2 };

struct ConsensusMsg {
  Stage stage = Stage::pre_prepare;
  std::int64_t round = 0;
  ParticipantId candidate_id = kNoParticipant;  // aggregator of the candidate
  Hash candidate_digest{};
  std::optional<bool> vote;  // commit only
  ParticipantId sender_id = kNoParticipant;
  Signature signature;

  Bytes signing_bytes() const {
    ByteWriter w;
    w.text("consensus");
    w.u64(static_cast<std::uint64_t>(stage));
    w.i64(round);
    w.u64(candidate_id);
    w.raw(candidate_digest);
    w.u64(vote.has_value() ? (*vote ? 1 : 0) : 2);
    w.u64(sender_id);
    return std::move(w).bytes();
  }

  void sign(const Signer& s) { signature = s.sign(sender_id, signing_bytes()); }
  bool verify(const Signer& s) const {
    if ((stage == Stage::commit) != vote.has_value()) return false;
    return s.knows(sender_id) && s.verify(sender_id, signing_bytes(), signature);
  }

  friend bool operator==(const ConsensusMsg&, const ConsensusMsg&) = default;
};

}  // namespace blockdfl
