#ifndef FEDE_H
#define FEDE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define FEDE_SPLIT_TRAIN 0

#define FEDE_SPLIT_VALID 1

#define FEDE_SPLIT_TEST 2

#define FEDE_DIRECTIONS_TAIL 0

#define FEDE_DIRECTIONS_HEAD 1

#define FEDE_DIRECTIONS_BOTH 2

#define FEDE_MESSAGE_REGISTER 1

#define FEDE_MESSAGE_DISTRIBUTE 2

#define FEDE_MESSAGE_UPDATE 3

typedef enum {
  FEDE_STATUS_OK = 0,
  FEDE_STATUS_NULL_ARGUMENT = 1,
  FEDE_STATUS_INVALID_ARGUMENT = 2,
  FEDE_STATUS_IO = 3,
  FEDE_STATUS_PARSE = 4,
  FEDE_STATUS_CONFIG = 5,
  FEDE_STATUS_FORMAT = 6,
  FEDE_STATUS_VOCAB_MISMATCH = 7,
  FEDE_STATUS_CONTRACT = 8,
  FEDE_STATUS_UNKNOWN_LABEL = 9,
  FEDE_STATUS_PANIC = 10,
} FedeStatus;

/**
 * A federated dataset: client shards and their vocabularies.
 */
typedef struct FedeDataset FedeDataset;

/**
 * A decoded or constructed protocol message.
 */
typedef struct FedeMessage FedeMessage;

/**
 * A trained or loaded checkpoint together with its dataset.
 */
typedef struct FedeModel FedeModel;

/**
 * Sizes of one client's shard.
 */
typedef struct {
  uint64_t entities;
  uint64_t relations;
  uint64_t train;
  uint64_t valid;
  uint64_t test;
} FedeClientInfo;

/**
 * Filtered link-prediction metrics over `count` queries.
 */
typedef struct {
  double mrr;
  double hits1;
  double hits5;
  double hits10;
  uint64_t count;
} FedeMetrics;

/**
 * Bytes owned by the library; release with [`fede_buffer_free`].
 */
typedef struct {
  uint8_t *data;
  size_t len;
} FedeBuffer;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *fede_version(void);

/**
 * Message of the last failed call on this thread, or NULL after a success.
 * Valid until the next call into the library on this thread.
 */
const char *fede_last_error(void);

/**
 * Loads a dataset from a split manifest.
 */
FedeStatus fede_dataset_load(const char *manifest, FedeDataset **out);

/**
 * Splits a triple file into `clients` shards by relation, writes them with a
 * manifest under `out_dir`, and returns the dataset.
 */
FedeStatus fede_dataset_split(const char *triples,
                              size_t clients,
                              uint64_t seed,
                              const char *out_dir,
                              FedeDataset **out);

FedeStatus fede_dataset_num_clients(const FedeDataset *dataset, size_t *out);

FedeStatus fede_dataset_client_info(const FedeDataset *dataset, size_t client, FedeClientInfo *out);

void fede_dataset_free(FedeDataset *dataset);

/**
 * Trains per the TOML configuration at `config_path`, writing the run
 * directory it names, and returns the resulting model.
 */
FedeStatus fede_train(const char *config_path, bool resume, FedeModel **out);

/**
 * Loads a checkpoint. `manifest` may be NULL to use the dataset recorded in
 * the checkpoint's configuration.
 */
FedeStatus fede_model_load(const char *checkpoint, const char *manifest, FedeModel **out);

FedeStatus fede_model_save(const FedeModel *model, const char *path);

FedeStatus fede_model_num_clients(const FedeModel *model, size_t *out);

/**
 * Score of a triple given in the client's local ids.
 */
FedeStatus fede_model_score(const FedeModel *model,
                            size_t client,
                            uint32_t head,
                            uint32_t relation,
                            uint32_t tail,
                            double *out);

/**
 * Score of a triple given by labels in the client's vocabulary.
 */
FedeStatus fede_model_score_labels(const FedeModel *model,
                                   size_t client,
                                   const char *head,
                                   const char *relation,
                                   const char *tail,
                                   double *out);

/**
 * Filtered ranking metrics on `split`. `per_client` may be NULL; otherwise
 * it must hold `len` entries and `len` must equal the number of clients.
 */
FedeStatus fede_model_evaluate(const FedeModel *model,
                               uint32_t split,
                               uint32_t directions,
                               size_t threads,
                               FedeMetrics *per_client,
                               size_t len,
                               FedeMetrics *average);

void fede_model_free(FedeModel *model);

/**
 * A REGISTER message carrying `count` entity labels.
 */
FedeStatus fede_message_new_register(uint32_t client,
                                     const char *const *labels,
                                     size_t count,
                                     FedeMessage **out);

/**
 * A DISTRIBUTE or UPDATE message over a row-major `rows x dim` matrix.
 */
FedeStatus fede_message_new_entities(uint8_t kind,
                                     uint64_t round,
                                     uint32_t client,
                                     size_t rows,
                                     size_t dim,
                                     const double *data,
                                     FedeMessage **out);

FedeStatus fede_message_decode(const uint8_t *bytes, size_t len, FedeMessage **out);

FedeStatus fede_message_encode(const FedeMessage *message, FedeBuffer *out);

/**
 * Kind, round (0 for REGISTER) and client of a message. Any output pointer
 * may be NULL.
 */
FedeStatus fede_message_header(const FedeMessage *message,
                               uint8_t *kind,
                               uint64_t *round,
                               uint32_t *client);

/**
 * Number of labels in a REGISTER message (0 for other kinds).
 */
FedeStatus fede_message_label_count(const FedeMessage *message, size_t *out);

/**
 * Label `index` of a REGISTER message, owned by the message handle.
 */
FedeStatus fede_message_label(const FedeMessage *message, size_t index, const char **out);

FedeStatus fede_message_shape(const FedeMessage *message, size_t *rows, size_t *dim);

/**
 * Copies the entity rows (row-major) into `out`, which must hold exactly
 * `rows * dim` values.
 */
FedeStatus fede_message_copy_entities(const FedeMessage *message, double *out, size_t len);

void fede_message_free(FedeMessage *message);

void fede_buffer_free(FedeBuffer buffer);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FEDE_H */
