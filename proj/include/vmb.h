/* C interface to the kinetic plasma solver library. All entry points are
 * exception-free: failures come back as status codes and the thread-local
 * message of vmb_last_error(). Handles are opaque; free them with the
 * matching *_free call. */
#ifndef VMB_H
#define VMB_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef struct vmb_config vmb_config;

typedef enum {
  VMB_OK = 0,
  VMB_PROPERTY_FAILURE = 1, /* verify ran, at least one check failed */
  VMB_CONFIG_ERROR = 2,
  VMB_NUMERICAL_ABORT = 3, /* NaN or CFL abort */
  VMB_IO_ERROR = 4,
  VMB_INVALID_ARGUMENT = 5
} vmb_status;

vmb_status vmb_config_load_file(const char* path, vmb_config** out);
vmb_status vmb_config_load_text(const char* json_text, vmb_config** out);
vmb_status vmb_config_default(vmb_config** out);
void vmb_config_free(vmb_config* cfg);

vmb_status vmb_config_set_threads(vmb_config* cfg, int threads);
vmb_status vmb_config_set_seed(vmb_config* cfg, uint64_t seed);
/* canonical JSON of the configuration; release with vmb_string_free */
vmb_status vmb_config_dump(const vmb_config* cfg, char** out);
void vmb_string_free(char* s);

/* Time integration; writes series.csv and state_<step>.ckpt files under
 * out_dir. Pass a checkpoint path to resume; the resumed trajectory is
 * bitwise identical to an uninterrupted one. */
vmb_status vmb_simulate(const vmb_config* cfg, const char* out_dir, const char* resume_or_null);

/* Light-speed limit sweep; writes rates.json under out_dir. */
vmb_status vmb_sweep(const vmb_config* cfg, const char* out_dir);

/* Expansion-remainder scaling check; writes rates.json under out_dir. */
vmb_status vmb_expand(const vmb_config* cfg, const char* out_dir);

/* Invariant suite; writes report.json under out_dir. checks_or_null is a
 * comma-separated selection ("" runs nothing, NULL runs everything).
 * Returns VMB_PROPERTY_FAILURE when any executed check fails. */
vmb_status vmb_verify(const vmb_config* cfg, const char* out_dir, const char* checks_or_null);

const char* vmb_last_error(void);

#ifdef __cplusplus
}
#endif

#endif /* VMB_H */
