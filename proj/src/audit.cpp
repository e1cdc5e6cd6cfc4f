#include <set>

#include "trapdoor/detection.hpp"

namespace trapdoor::detect {

namespace {

std::string failed_tests(const randomness::SuiteReport& suite) {
  std::string out;
  for (const auto& r : suite.results) {
    if (r.verdict != randomness::Verdict::Fail) continue;
    if (!out.empty()) out += ',';
    out += r.test_name;
  }
  return out;
}

// Values below q have a biased leading byte, so only the q_len-1 low bytes
// enter the battery. Subliminal chunks live entirely in those bytes.
Bytes low_bytes(const dsa::BigInt& v, std::size_t q_len) {
  Bytes b = dsa::to_bytes(v, q_len);
  if (!b.empty()) b.erase(b.begin());
  return b;
}

}  // namespace

AuditResult audit_signatures(const FlowKey& flow, std::span<const IndexedSegment> window, const dsa::WardenKey* key,
                             double alpha) {
  using namespace rule_id;
  AuditResult result;
  randomness::BitStream nonces;
  nonces.source = randomness::SourceTag::RecoveredNonces;
  std::set<std::size_t> carriers;

  for (const auto& item : window) {
    const auto& payload = item.segment->payload;
    if (payload.empty()) continue;
    const dsa::RecordScan scan = dsa::scan_records(payload);
    for (const auto& fault : scan.faults)
      result.findings.push_back(make_finding(kMalformedRecord, flow, item.index, item.ts,
                                             {{"offset", std::to_string(fault.offset)},
                                              {"error", std::string(to_string(fault.error))}}));
    for (const auto& found : scan.records) {
      ++result.records;
      const auto& rec = found.record;
      if (!key) {
        if (rec.sig.r == 0 || rec.sig.s == 0)
          result.findings.push_back(make_finding(kInvalidSignature, flow, item.index, item.ts,
                                                 {{"offset", std::to_string(found.offset)}, {"reason", "zero component"}}));
        continue;
      }
      if (found.q_len != key->params.q_bytes()) {
        result.findings.push_back(make_finding(
            kMalformedRecord, flow, item.index, item.ts,
            {{"offset", std::to_string(found.offset)},
             {"error", "q_len " + std::to_string(found.q_len) + " does not match key"}}));
        continue;
      }
      if (!dsa::verify(key->params, key->y, rec.h, rec.sig)) {
        result.findings.push_back(make_finding(kInvalidSignature, flow, item.index, item.ts,
                                               {{"offset", std::to_string(found.offset)}, {"reason", "verify failed"}}));
        continue;
      }
      ++result.verified;
      if (key->x) {
        const dsa::BigInt k = dsa::extract_subliminal(key->params, rec.sig, rec.h, *key->x);
        nonces.append_bytes(low_bytes(k, found.q_len));
        carriers.insert(item.index);
      }
    }
  }

  result.nonce_suite = randomness::run_suite(nonces, alpha);
  if (result.nonce_suite.overall == randomness::Overall::NonRandom && !window.empty()) {
    Finding f = make_finding(kSubliminalNonces, flow, std::nullopt, window.back().ts,
                             {{"signatures", std::to_string(result.verified)},
                              {"overall", to_string(result.nonce_suite.overall)},
                              {"failed_tests", failed_tests(result.nonce_suite)}},
                             result.nonce_suite.min_p_value());
    f.anchor_index = window.back().index;
    result.findings.push_back(std::move(f));
    result.carrier_packets.assign(carriers.begin(), carriers.end());
  }
  return result;
}

KeyAudit audit_key_material(const dsa::WardenKey& key, double alpha, Timestamp ts) {
  KeyAudit audit;
  if (!key.x) {
    audit.suite = randomness::run_suite({}, alpha);
    return audit;
  }
  const auto bytes = low_bytes(*key.x, key.params.q_bytes());
  audit.suite = randomness::run_suite(randomness::BitStream::from_bytes(bytes, randomness::SourceTag::KeyMaterial), alpha);
  if (audit.suite.overall == randomness::Overall::NonRandom) {
    audit.finding = make_finding(rule_id::kNonrandomKey, std::nullopt, std::nullopt, ts,
                                 {{"bits", std::to_string(8 * bytes.size())},
                                  {"provenance", key.provenance ? dsa::to_string(*key.provenance) : "unknown"},
                                  {"failed_tests", failed_tests(audit.suite)}},
                                 audit.suite.min_p_value());
  }
  return audit;
}

}  // namespace trapdoor::detect
