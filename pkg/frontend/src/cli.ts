// Command-line entry: export a tfjs conv stack to the convstack weight format.
//
//   convstack-export --model <dir|model.json> --out-manifest m.json --out-weights w.bin
//                    [--prefix block1 | --layers 2] [--source name]
//                    [--fixtures f.json --n-inputs 10 --fixture-seed 0]
//
// --fixtures also runs the exported sub-model on seeded random inputs and
// stores inputs/outputs ([N][C][H][W]) for cross-engine validation.

import { writeFileSync } from 'fs'
import { dirname } from 'path'
import { exportModel, makeFixtures } from './export'
import { loadModelFromDir } from './modelio'

interface Args {
  model?: string
  outManifest?: string
  outWeights?: string
  prefix?: string
  layers?: number
  source?: string
  fixtures?: string
  nInputs: number
  fixtureSeed: number
}

function parseArgs(argv: string[]): Args {
  const args: Args = { nInputs: 10, fixtureSeed: 0 }
  for (let i = 0; i < argv.length; i++) {
    const flag = argv[i]
    const next = () => {
      if (i + 1 >= argv.length) throw new Error(`missing value for ${flag}`)
      return argv[++i]
    }
    switch (flag) {
      case '--model': args.model = next(); break
      case '--out-manifest': args.outManifest = next(); break
      case '--out-weights': args.outWeights = next(); break
      case '--prefix': args.prefix = next(); break
      case '--layers': args.layers = parseInt(next(), 10); break
      case '--source': args.source = next(); break
      case '--fixtures': args.fixtures = next(); break
      case '--n-inputs': args.nInputs = parseInt(next(), 10); break
      case '--fixture-seed': args.fixtureSeed = parseInt(next(), 10); break
      default: throw new Error(`unknown flag ${flag}`)
    }
  }
  if (!args.model || !args.outManifest || !args.outWeights) {
    throw new Error('--model, --out-manifest and --out-weights are required')
  }
  return args
}

async function main(): Promise<void> {
  const args = parseArgs(process.argv.slice(2))
  const dir = args.model!.endsWith('model.json') ? dirname(args.model!) : args.model!
  const model = await loadModelFromDir(dir)
  const result = exportModel(model, {
    source: args.source ?? args.model,
    layerPrefix: args.prefix,
    layerCount: args.layers,
  })
  writeFileSync(args.outManifest!, JSON.stringify(result.manifest, null, 2) + '\n')
  writeFileSync(args.outWeights!, result.payload)
  console.log(
    `exported ${result.layerNames.length} layer(s) [${result.layerNames.join(', ')}], ` +
    `${result.payload.length} weight bytes`,
  )
  if (args.fixtures) {
    const fixtures = makeFixtures(result.truncated, args.nInputs, args.fixtureSeed)
    writeFileSync(args.fixtures, JSON.stringify(fixtures) + '\n')
    console.log(`wrote ${args.nInputs} fixture input/output pairs to ${args.fixtures}`)
  }
}

main().catch(error => {
  console.error(`error: ${error instanceof Error ? error.message : error}`)
  process.exit(1)
})
