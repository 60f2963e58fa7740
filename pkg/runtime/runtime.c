#include "runtime.h"

#include <stdio.h>
#include <string.h>
#include <time.h>

/* ---------------------------------------------------------------- rings */

static int cap_fields(const rt_chan *c) { return c->cap_msgs * c->nfields; }

int rt_try_enqueue(rt_chan *c, int value)
{
    pthread_mutex_lock(&c->mu);
    if (c->count >= cap_fields(c)) {
        pthread_mutex_unlock(&c->mu);
        return RT_FULL;
    }
    c->fields[(c->head + c->count) % cap_fields(c)] = value;
    c->count += 1;
    c->wpartial += 1;
    if (c->wpartial == c->nfields)
        c->wpartial = 0; /* message boundary: fields become visible */
    pthread_mutex_unlock(&c->mu);
    return RT_OK;
}

int enqueue(rt_chan *c, int value) { return rt_try_enqueue(c, value); }

int rt_try_dequeue(rt_chan *c, int *out)
{
    pthread_mutex_lock(&c->mu);
    if (c->count - c->wpartial <= 0) {
        pthread_mutex_unlock(&c->mu);
        return RT_EMPTY;
    }
    *out = c->fields[c->head];
    c->head = (c->head + 1) % cap_fields(c);
    c->count -= 1;
    pthread_mutex_unlock(&c->mu);
    return RT_OK;
}

int dequeue(rt_chan *c)
{
    int v = 0;
    int rc = rt_try_dequeue(c, &v);
    assert(rc == RT_OK && "dequeue on an empty channel");
    (void)rc;
    return v;
}

int rt_chan_can_send(rt_chan *c)
{
    pthread_mutex_lock(&c->mu);
    int ok = c->wpartial == 0 && c->count + c->nfields <= cap_fields(c);
    pthread_mutex_unlock(&c->mu);
    return ok;
}

int rt_chan_can_recv(rt_chan *c)
{
    pthread_mutex_lock(&c->mu);
    int ok = c->count - c->wpartial >= c->nfields;
    pthread_mutex_unlock(&c->mu);
    return ok;
}

/* ------------------------------------------------------------- stepping */

static pthread_mutex_t rt_mu = PTHREAD_MUTEX_INITIALIZER;
static pthread_cond_t rt_cv = PTHREAD_COND_INITIALIZER;
static pthread_key_t rt_pid_key;
static FILE *rt_trace;
static unsigned long rt_steps, rt_max_steps;
static unsigned long rt_blocked_events;

void rt_init(int nprocs)
{
    const char *seed = getenv("REFINE_SEED");
    const char *trace = getenv("RT_TRACE");
    const char *max_steps = getenv("RT_MAX_STEPS");
    (void)nprocs;
    srand(seed ? (unsigned)atoi(seed) : 1u);
    pthread_key_create(&rt_pid_key, NULL);
    if (trace && trace[0]) {
        rt_trace = fopen(trace, "w");
        if (rt_trace)
            setvbuf(rt_trace, NULL, _IOLBF, 0); /* survive hard kills */
    }
    rt_max_steps = max_steps ? strtoul(max_steps, NULL, 10) : 0;
}

void rt_finish(void)
{
    if (rt_trace) {
        fflush(rt_trace);
        fclose(rt_trace);
        rt_trace = NULL;
    }
}

void rt_register(int pid)
{
    pthread_setspecific(rt_pid_key, (void *)(long)(pid + 1));
}

int rt_self(void)
{
    return (int)(long)pthread_getspecific(rt_pid_key) - 1;
}

void rt_log(int edge)
{
    if (rt_trace)
        fprintf(rt_trace, "%d %d\n", rt_self(), edge);
    rt_steps += 1;
    if (rt_max_steps && rt_steps >= rt_max_steps) {
        rt_finish();
        exit(0); /* bounded validation run complete */
    }
}

void rt_step_begin(int edge)
{
    pthread_mutex_lock(&rt_mu);
    rt_log(edge);
}

void rt_step_end(void)
{
    pthread_cond_broadcast(&rt_cv);
    pthread_mutex_unlock(&rt_mu);
}

void rt_step_hold(void) { pthread_mutex_lock(&rt_mu); }

void rt_lock_for_guard(void) { pthread_mutex_lock(&rt_mu); }

int rt_guard(int edge, int value)
{
    if (value)
        rt_log(edge);
    pthread_mutex_unlock(&rt_mu);
    return value;
}

int rt_guard_hold(int edge, int value)
{
    if (value) {
        rt_log(edge);
        return 1;
    }
    pthread_mutex_unlock(&rt_mu);
    return 0;
}

int rt_else(int edge)
{
    pthread_mutex_lock(&rt_mu);
    rt_log(edge);
    pthread_mutex_unlock(&rt_mu);
    return 1;
}

void rt_blocked(void)
{
    pthread_mutex_lock(&rt_mu);
    rt_blocked_events += 1;
    pthread_mutex_unlock(&rt_mu);
}

unsigned long rt_blocked_count(void) { return rt_blocked_events; }

void rt_block_wait(void)
{
    struct timespec nap = {0, 200000}; /* 0.2 ms */
    nanosleep(&nap, NULL);
}

static void rt_cv_nap(void)
{
    struct timespec deadline;
    clock_gettime(CLOCK_REALTIME, &deadline);
    deadline.tv_nsec += 2000000; /* 2 ms */
    if (deadline.tv_nsec >= 1000000000L) {
        deadline.tv_sec += 1;
        deadline.tv_nsec -= 1000000000L;
    }
    pthread_cond_timedwait(&rt_cv, &rt_mu, &deadline);
}

void rt_atomic_wait(void) { rt_cv_nap(); }

void rt_chan_wait_send(rt_chan *c)
{
    while (!rt_chan_can_send(c))
        rt_cv_nap();
}

void rt_chan_wait_recv(rt_chan *c)
{
    while (!rt_chan_can_recv(c))
        rt_cv_nap();
}

void rt_send_begin(int edge, rt_chan *c)
{
    pthread_mutex_lock(&rt_mu);
    rt_chan_wait_send(c);
    rt_log(edge);
}

void rt_recv_begin(int edge, rt_chan *c)
{
    pthread_mutex_lock(&rt_mu);
    rt_chan_wait_recv(c);
    rt_log(edge);
}
