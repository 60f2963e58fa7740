/* Support runtime for generated translation units.
 *
 * Provides the bounded FIFO channel rings behind enqueue/dequeue, the
 * thread registration and step protocol used by traced builds, and the
 * seeded stub-choice support.  C99 + POSIX threads.
 */
#ifndef PML_RUNTIME_H
#define PML_RUNTIME_H

#ifndef _POSIX_C_SOURCE
#define _POSIX_C_SOURCE 200809L
#endif

#include <assert.h>
#include <pthread.h>
#include <stdlib.h>

typedef unsigned char uchar;

#define RT_OK 0
#define RT_FULL (-1)
#define RT_EMPTY (-2)

/* Message fields live in a flat ring; a message becomes visible to
 * readers only once all of its fields have been pushed. */
typedef struct rt_chan {
    int *fields;
    int cap_msgs;
    int nfields;
    int head;      /* next field to read */
    int count;     /* stored fields, including the partial message */
    int wpartial;  /* fields pushed of the incomplete message */
    pthread_mutex_t mu;
} rt_chan;

#define RT_CHAN_INIT(cap, nf) \
    { (int[(cap) * (nf)]){0}, (cap), (nf), 0, 0, 0, PTHREAD_MUTEX_INITIALIZER }

/* ring operations; safe from any thread */
int enqueue(rt_chan *c, int value);      /* RT_OK or RT_FULL  */
int dequeue(rt_chan *c);                 /* asserts a field is available */
int rt_try_enqueue(rt_chan *c, int value);
int rt_try_dequeue(rt_chan *c, int *out); /* RT_OK or RT_EMPTY */
int rt_chan_can_send(rt_chan *c);        /* room for a whole message */
int rt_chan_can_recv(rt_chan *c);        /* a whole message is stored  */

/* harness lifecycle */
void rt_init(int nprocs);   /* reads REFINE_SEED, RT_TRACE, RT_MAX_STEPS */
void rt_finish(void);
void rt_register(int pid);  /* bind the calling thread to instance pid */
int rt_self(void);

/* step protocol: statements run one at a time under a global lock and
 * report their automaton edge; blocking constructs wait on the lock */
void rt_step_begin(int edge);
void rt_step_end(void);
void rt_step_hold(void);
void rt_log(int edge);
int rt_guard(int edge, int value);      /* lock held on entry; releases */
int rt_guard_hold(int edge, int value); /* keeps the lock when true */
int rt_else(int edge);
void rt_blocked(void);
void rt_block_wait(void);
void rt_atomic_wait(void);              /* lock held: release, nap, retake */
void rt_chan_wait_send(rt_chan *c);     /* lock held variants */
void rt_chan_wait_recv(rt_chan *c);
void rt_send_begin(int edge, rt_chan *c);
void rt_recv_begin(int edge, rt_chan *c);
void rt_lock_for_guard(void);
unsigned long rt_blocked_count(void);

/* guards must evaluate under the lock, hence the comma expressions */
#define RT_GUARD(edge, expr) \
    (rt_lock_for_guard(), rt_guard((edge), (expr) != 0))
#define RT_GUARD_HOLD(edge, expr) \
    (rt_lock_for_guard(), rt_guard_hold((edge), (expr) != 0))

#endif /* PML_RUNTIME_H */
