#ifndef ODOLAB_H
#define ODOLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Verdict codes written by the classifiers.
 */
#define ODO_VERDICT_YES 0

#define ODO_VERDICT_NO 1

#define ODO_VERDICT_UNDECIDED 2

typedef enum OdoStatus {
  ODO_STATUS_OK = 0,
  ODO_STATUS_NULL_ARGUMENT = 1,
  ODO_STATUS_INVALID_UTF8 = 2,
  ODO_STATUS_PARSE_ERROR = 3,
  /**
   * The inputs were well formed but the operation does not apply to them.
   */
  ODO_STATUS_DOMAIN_ERROR = 4,
  ODO_STATUS_PANIC = 5,
} OdoStatus;

typedef enum OdoRelation {
  ODO_RELATION_CONJUGATE = 0,
  ODO_RELATION_ISOMORPHIC = 1,
  ODO_RELATION_CONTINUOUSLY_ORBIT_EQUIVALENT = 2,
} OdoRelation;

typedef struct OdoChain OdoChain;

typedef struct OdoCocycle OdoCocycle;

typedef struct OdoDescriptor OdoDescriptor;

typedef struct OdoLattice OdoLattice;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Owned by the
 * library; do not free.
 */
const char *odo_last_error(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library.
 */
void odo_string_free(char *s);

/**
 * # Safety
 * `h` must be null or a handle from this library; it is invalid afterwards.
 */
void odo_lattice_free(struct OdoLattice *h);

/**
 * # Safety
 * `h` must be null or a handle from this library; it is invalid afterwards.
 */
void odo_chain_free(struct OdoChain *h);

/**
 * # Safety
 * `h` must be null or a handle from this library; it is invalid afterwards.
 */
void odo_cocycle_free(struct OdoCocycle *h);

/**
 * # Safety
 * `h` must be null or a handle from this library; it is invalid afterwards.
 */
void odo_descriptor_free(struct OdoDescriptor *h);

/**
 * Parses a literal such as `2; 3 1; 0 2`.
 *
 * # Safety
 * `literal` must be a nul-terminated string and `out` writable.
 */
enum OdoStatus odo_lattice_parse(const char *literal, struct OdoLattice **out);

/**
 * The lattice in canonical literal form.
 *
 * # Safety
 * `l` must be a live handle and `out` writable.
 */
enum OdoStatus odo_lattice_to_string(const struct OdoLattice *l, char **out);

/**
 * Index in ℤ^d as a decimal string.
 *
 * # Safety
 * `l` must be a live handle and `out` writable.
 */
enum OdoStatus odo_lattice_index(const struct OdoLattice *l, char **out);

/**
 * Dual lattice as a `1/s; …` literal.
 *
 * # Safety
 * `l` must be a live handle and `out` writable.
 */
enum OdoStatus odo_lattice_dual(const struct OdoLattice *l, char **out);

/**
 * Whether a rational vector lies in the lattice.
 *
 * # Safety
 * `l` must be a live handle, `vector` a nul-terminated string, `out` writable.
 */
enum OdoStatus odo_lattice_contains(const struct OdoLattice *l, const char *vector, bool *out);

/**
 * Parses a `diagpow` or `explicit` chain file. Derived chains come from
 * [`odo_cocycle_derived_chain`].
 *
 * # Safety
 * `spec` must be a nul-terminated string and `out` writable.
 */
enum OdoStatus odo_chain_parse(const char *spec, struct OdoChain **out);

/**
 * # Safety
 * `c` must be a live handle and `out` writable.
 */
enum OdoStatus odo_chain_dim(const struct OdoChain *c, size_t *out);

/**
 * Stage `j ≥ 1` as a lattice literal.
 *
 * # Safety
 * `c` must be a live handle and `out` writable.
 */
enum OdoStatus odo_chain_stage(const struct OdoChain *c, size_t j, char **out);

/**
 * Clopen value group, e.g. `Z[1/6]`.
 *
 * # Safety
 * `c` must be a live handle and `out` writable.
 */
enum OdoStatus odo_chain_value_group(const struct OdoChain *c, char **out);

/**
 * Parses a cocycle spec over `chain`; the spec's own chain reference is
 * ignored.
 *
 * # Safety
 * `spec` must be a nul-terminated string, `chain` a live handle, `out` writable.
 */
enum OdoStatus odo_cocycle_parse(const char *spec,
                                 const struct OdoChain *chain,
                                 struct OdoCocycle **out);

/**
 * `Ok` when the cocycle is a valid speedup, `DomainError` with the reason
 * otherwise.
 *
 * # Safety
 * `c` must be a live handle.
 */
enum OdoStatus odo_cocycle_validate(const struct OdoCocycle *c);

/**
 * Whether the orbit of 0 is transitive at every depth up to `depth`.
 *
 * # Safety
 * `c` must be a live handle and `out` writable.
 */
enum OdoStatus odo_cocycle_minimal(const struct OdoCocycle *c, size_t depth, bool *out);

/**
 * Stage `j` of the derived chain as a lattice literal.
 *
 * # Safety
 * `c` must be a live handle and `out` writable.
 */
enum OdoStatus odo_cocycle_derived_stage(const struct OdoCocycle *c, size_t j, char **out);

/**
 * The derived chain as a chain handle. Minimality is checked to `depth`.
 *
 * # Safety
 * `c` must be a live handle and `out` writable.
 */
enum OdoStatus odo_cocycle_derived_chain(const struct OdoCocycle *c,
                                         size_t depth,
                                         struct OdoChain **out);

/**
 * Parses `dim=2 shear=… supports=…`.
 *
 * # Safety
 * `spec` must be a nul-terminated string and `out` writable.
 */
enum OdoStatus odo_descriptor_parse(const char *spec, struct OdoDescriptor **out);

/**
 * Descriptor fitted to the first `depth` stages of `chain`.
 *
 * # Safety
 * `chain` must be a live handle and `out` writable.
 */
enum OdoStatus odo_descriptor_fit(const struct OdoChain *chain,
                                  size_t depth,
                                  struct OdoDescriptor **out);

/**
 * # Safety
 * `d` must be a live handle and `out` writable.
 */
enum OdoStatus odo_descriptor_to_string(const struct OdoDescriptor *d, char **out);

/**
 * # Safety
 * `d` must be a live handle, `vector` a nul-terminated string, `out` writable.
 */
enum OdoStatus odo_descriptor_member(const struct OdoDescriptor *d, const char *vector, bool *out);

/**
 * Decides `relation` between two descriptors. Writes one of the
 * `ODO_VERDICT_*` codes and, when `explanation` is not null, the verdict
 * with its witness or certificate.
 *
 * # Safety
 * `a` and `b` must be live handles, `verdict` writable, `explanation` null or writable.
 */
enum OdoStatus odo_classify(enum OdoRelation relation,
                            const struct OdoDescriptor *a,
                            const struct OdoDescriptor *b,
                            uint32_t height,
                            uint32_t denom,
                            int32_t *verdict,
                            char **explanation);

/**
 * Orbit equivalence of two chains through their clopen value groups.
 *
 * # Safety
 * `a` and `b` must be live handles, `verdict` writable, `explanation` null or writable.
 */
enum OdoStatus odo_classify_orbit_equivalence(const struct OdoChain *a,
                                              const struct OdoChain *b,
                                              int32_t *verdict,
                                              char **explanation);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ODOLAB_H */
