#ifndef ORBLABEL_H
#define ORBLABEL_H

#include <stddef.h>
#include <stdint.h>

#define ORBLABEL_MODE_COUNT 3

typedef enum OrblabelStatus {
  ORBLABEL_STATUS_OK = 0,
  ORBLABEL_STATUS_NULL_POINTER = 1,
  ORBLABEL_STATUS_INVALID_UTF8 = 2,
  ORBLABEL_STATUS_PARSE = 3,
  ORBLABEL_STATUS_INVALID_RECORD = 4,
  ORBLABEL_STATUS_INVALID_CONFIG = 5,
  ORBLABEL_STATUS_RULE = 6,
  ORBLABEL_STATUS_FILTER = 7,
  ORBLABEL_STATUS_PANIC = 8,
} OrblabelStatus;

// Opaque filter handle.
typedef struct OrblabelImm OrblabelImm;

// Element set in TLE units; `epoch_unix_s` is seconds since 1970-01-01 UTC.
typedef struct OrblabelRecord {
  uint32_t norad_id;
  double epoch_unix_s;
  double mean_motion;
  double eccentricity;
  double inclination;
  double raan;
  double argp;
  double mean_anomaly;
  double bstar;
  double n_dot;
  // 0 = TLE, 1 = SUPGP.
  uint8_t source;
} OrblabelRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread. Valid until the next
// failing call on the same thread; empty if none failed.
const char *orblabel_last_error(void);

// Modulo-10 checksum of the first 68 columns of a TLE line.
//
// # Safety
// `line` must be a nul-terminated string; `out` must be writable.
enum OrblabelStatus orblabel_tle_checksum(const char *line, uint8_t *out);

// Parses one two-line element set. The record is tagged TLE.
//
// # Safety
// `line1` and `line2` must be nul-terminated strings; `out` must be writable.
enum OrblabelStatus orblabel_parse_tle(const char *line1,
                                       const char *line2,
                                       struct OrblabelRecord *out);

// Rule-tier label for `cur` given `prev`, with default thresholds.
// `out_rule` receives the 1-based index of the rule that fired, 0 if none.
//
// # Safety
// Pointers must be valid; `out_label` and `out_rule` must be writable.
enum OrblabelStatus orblabel_rule_label(const struct OrblabelRecord *prev,
                                        const struct OrblabelRecord *cur,
                                        uint8_t *out_label,
                                        uint8_t *out_rule);

// New filter. `config_toml` is a pipeline configuration document, or null
// for defaults. Returns null on error.
//
// # Safety
// `config_toml` must be null or a nul-terminated string.
struct OrblabelImm *orblabel_imm_new(const char *config_toml);

// Feeds one observation. Writes the mode posterior (nominal, maneuver,
// decay) to `out_mu[0..3]` and the assigned label byte. On error the
// handle keeps its previous state.
//
// # Safety
// `imm` must come from `orblabel_imm_new`; `out_mu` must hold 3 doubles.
enum OrblabelStatus orblabel_imm_step(struct OrblabelImm *imm,
                                      const struct OrblabelRecord *obs,
                                      double *out_mu,
                                      uint8_t *out_label);

// Forgets all filter state; the next step re-initializes.
//
// # Safety
// `imm` must come from `orblabel_imm_new`.
enum OrblabelStatus orblabel_imm_reset(struct OrblabelImm *imm);

// Releases a handle. Null is ignored.
//
// # Safety
// `imm` must be null or come from `orblabel_imm_new`, and not be used after.
void orblabel_imm_free(struct OrblabelImm *imm);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ORBLABEL_H */
