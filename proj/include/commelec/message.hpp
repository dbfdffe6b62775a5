#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "commelec/belief.hpp"
#include "commelec/cost.hpp"
#include "commelec/profile.hpp"

namespace commelec {

class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Follower -> leader. The profile is the domain of definition of both the
// belief and the cost. All powers in kW / kVAr.
struct Advertisement {
  std::string agent_id;
  std::int64_t timestamp_us{0};
  PQProfile profile;
  BeliefDescriptor belief;
  CostDescriptor cost;
};

// Leader -> follower: explicit power setpoint request.
struct Request {
  std::string agent_id;
  std::int64_t timestamp_us{0};
  PQ setpoint;
};

// Fixed little-endian binary format with one-byte variant tags.
std::vector<std::uint8_t> encode_advertisement(const Advertisement& ad);
Advertisement decode_advertisement(const std::vector<std::uint8_t>& buf);
std::vector<std::uint8_t> encode_request(const Request& rq);
Request decode_request(const std::vector<std::uint8_t>& buf);

// Human-readable mirrors for debugging and configuration.
std::string advertisement_to_json(const Advertisement& ad);
std::string request_to_json(const Request& rq);

bool operator==(const Advertisement& a, const Advertisement& b);
bool operator==(const Request& a, const Request& b);

}  // namespace commelec
