import { defineConfig } from 'vitest/config';

export default defineConfig({
  test: {
    include: ['tests/**/*.test.ts'],
    environment: 'node',
    // The integration suite spawns the annotation server as a child
    // process; give it room to come up on slow machines.
    testTimeout: 60_000,
    hookTimeout: 60_000,
  },
});
