// Command-line entry mirroring the export job fields.
//
//   node --experimental-strip-types src/cli.ts \
//     --model path/to/model --data data/manifest.json --out exported/ \
//     [--batch-size 64] [--hook penultimate] [--role id-eval] [--save-model dir]
//
// The model identifier is either a directory holding a saved tfjs layers
// model (model.json + weights.bin) or a built-in seeded demo spec like
// demo:16-32,16-4. --save-model persists a demo model for reuse.

import { parseArgs } from 'util'

import { runExport } from './export.ts'
import { parseDemoSpec, buildDemoClassifier, saveModel } from './model.ts'

async function main() {
  const { values } = parseArgs({
    options: {
      model: { type: 'string' },
      data: { type: 'string' },
      out: { type: 'string' },
      'batch-size': { type: 'string', default: '64' },
      hook: { type: 'string', default: 'penultimate' },
      role: { type: 'string' },
      'save-model': { type: 'string' },
    },
  })
  if (!values.model || !values.data || !values.out) {
    console.error('usage: cli.ts --model <dir|demo:spec> --data <manifest.json> --out <dir>')
    process.exit(2)
  }
  if (values['save-model']) {
    const spec = parseDemoSpec(values.model)
    if (!spec) {
      console.error('--save-model only applies to demo: model identifiers')
      process.exit(2)
    }
    await saveModel(buildDemoClassifier(spec), values['save-model'])
    console.error(`demo model saved to ${values['save-model']}`)
  }
  const result = await runExport({
    model: values.model,
    data: values.data,
    hook: values.hook as 'penultimate',
    batchSize: Number(values['batch-size']),
    outDir: values.out,
    role: values.role as any,
  })
  console.log(JSON.stringify(result, null, 2))
}

main().catch(err => {
  console.error(`error: ${err.message}`)
  process.exit(1)
})
